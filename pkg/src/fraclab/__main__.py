from fraclab.cli import main
import sys

sys.exit(main())
