import numpy as np

from fraclab.fields import GridSpec, ScalarField


def band_limited(spec: GridSpec, max_mode: int, seed: int, zero_mean: bool = True) -> ScalarField:
    """Random real field whose Fourier modes satisfy |k_j| <= max_mode."""
    rng = np.random.default_rng(seed)
    k = np.fft.fftfreq(spec.n, 1.0 / spec.n)
    grids = np.meshgrid(*([k] * spec.d), indexing="ij")
    mask = np.all([np.abs(g) <= max_mode for g in grids], axis=0)
    c = (rng.normal(size=spec.shape) + 1j * rng.normal(size=spec.shape)) * mask
    v = np.real(np.fft.ifftn(c))
    if zero_mean:
        v -= v.mean()
    return ScalarField(spec, v / np.max(np.abs(v)))
