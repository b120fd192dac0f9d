"""Spectral kernels: STFT, mel, MFCC, chroma, contrast, tonnetz and HPSS.

Every function here is a pure function of its inputs.  Matrices follow the
``[bins x frames]`` convention.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.ndimage

BIN_AXES = ("linear-hz", "mel", "chroma", "contrast-band", "tonnetz-dim", "cepstral")

PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


@dataclass(frozen=True)
class DspConfig:
    sample_rate: int = 16000
    frame_length: int = 2048
    hop: int = 512
    n_mels: int = 128
    n_mfcc: int = 40
    n_chroma: int = 12
    n_contrast_bands: int = 6
    fmin: float = 0.0
    fmax: float | None = None
    amplitude_floor: float = 1e-10
    top_db: float = 80.0
    hpss_kernel: int = 31
    hpss_power: float = 2.0
    center: bool = True
    # octave bands cannot start at 0 Hz, so contrast gets its own lower edge
    contrast_fmin: float = 100.0
    contrast_quantile: float = 0.02
    chroma_fmin: float = 32.7
    hp_mel_rows: int = 37

    def __post_init__(self):
        if self.hop > self.frame_length:
            raise ValueError("hop must not exceed frame_length")
        if self.n_mfcc > self.n_mels:
            raise ValueError("n_mfcc must not exceed n_mels")
        if self.fmax is not None and self.fmax > self.sample_rate / 2:
            raise ValueError("fmax must not exceed the Nyquist frequency")
        if self.amplitude_floor <= 0:
            raise ValueError("amplitude_floor must be positive")
        if self.n_chroma != 12:
            raise ValueError("chroma is defined for 12 pitch classes")

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2

    @property
    def upper_hz(self) -> float:
        return self.nyquist if self.fmax is None else float(self.fmax)

    @property
    def n_bins(self) -> int:
        return self.frame_length // 2 + 1

    def fft_frequencies(self) -> np.ndarray:
        return np.linspace(0.0, self.nyquist, self.n_bins)

    def n_frames(self, num_samples: int) -> int:
        """Frame count produced by :func:`stft` for a signal of this length."""
        padded = num_samples + 2 * (self.frame_length // 2) if self.center else num_samples
        return 1 + (padded - self.frame_length) // self.hop


@dataclass(frozen=True)
class Spectrogram:
    data: np.ndarray
    bin_axis: str
    frame_hop: int
    sample_rate: int
    db: bool = field(default=False)

    def __post_init__(self):
        if self.bin_axis not in BIN_AXES:
            raise ValueError(f"unknown bin axis {self.bin_axis!r}")
        if self.data.ndim != 2:
            raise ValueError("spectrogram data must be 2-D [bins x frames]")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("spectrogram contains non-finite values")

    @property
    def n_bins(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def replace(self, data: np.ndarray, bin_axis: str | None = None, db: bool | None = None) -> "Spectrogram":
        return Spectrogram(
            data=data,
            bin_axis=self.bin_axis if bin_axis is None else bin_axis,
            frame_hop=self.frame_hop,
            sample_rate=self.sample_rate,
            db=self.db if db is None else db,
        )


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (the DFT-even variant used for analysis)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(samples, cfg: DspConfig) -> Spectrogram:
    """Power spectrogram ``|STFT|**2`` with a Hann window."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a mono sample vector")
    if x.size == 0 or x.size < cfg.frame_length:
        raise ValueError("signal too short")
    if cfg.center:
        x = np.pad(x, cfg.frame_length // 2, mode="reflect")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_length)[:: cfg.hop]
    spectrum = np.fft.rfft(frames * hann(cfg.frame_length), axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    return Spectrogram(np.ascontiguousarray(power.T), "linear-hz", cfg.hop, cfg.sample_rate)


# Slaney-style mel scale: linear below 1 kHz, logarithmic above.
_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = np.log(6.4) / 27.0


def hz_to_mel(hz):
    hz = np.asarray(hz, dtype=np.float64)
    linear = hz / _F_SP
    with np.errstate(divide="ignore"):
        log = _MIN_LOG_MEL + np.log(np.maximum(hz, 1e-300) / _MIN_LOG_HZ) / _LOGSTEP
    return np.where(hz >= _MIN_LOG_HZ, log, linear)


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    linear = mel * _F_SP
    log = _MIN_LOG_HZ * np.exp(_LOGSTEP * (mel - _MIN_LOG_MEL))
    return np.where(mel >= _MIN_LOG_MEL, log, linear)


def mel_filterbank(cfg: DspConfig, n_mels: int | None = None) -> np.ndarray:
    """Triangular mel filters, peak height 1, shape ``[n_mels x bins]``.

    A filter that falls between two FFT bins ends up all-zero; that is
    reported with a warning rather than an exception.
    """
    n_mels = cfg.n_mels if n_mels is None else n_mels
    fmin, fmax = float(cfg.fmin), cfg.upper_hz
    if not fmin < fmax:
        raise ValueError("fmin must be below fmax")
    freqs = cfg.fft_frequencies()
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lower, centre, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (centre - lower)
    falling = (upper - freqs[None, :]) / (upper - centre)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.max(axis=1) == 0)
    if empty.size:
        warnings.warn(
            f"{empty.size} mel filters are empty; n_mels={n_mels} is too large "
            f"for frame_length={cfg.frame_length}",
            stacklevel=2,
        )
    return weights


def mel_spectrogram(power: Spectrogram, cfg: DspConfig, n_mels: int | None = None) -> Spectrogram:
    bank = mel_filterbank(cfg, n_mels)
    return power.replace(bank @ power.data, bin_axis="mel")


def power_to_db(power: Spectrogram, cfg: DspConfig, ref: float = 1.0) -> Spectrogram:
    if ref <= 0:
        raise ValueError("ref must be positive")
    db = 10.0 * np.log10(np.maximum(power.data, cfg.amplitude_floor) / ref)
    if cfg.top_db is not None and db.size:
        db = np.maximum(db, db.max() - cfg.top_db)
    return power.replace(db, db=True)


def mfcc(mel_db: Spectrogram, n_mfcc: int) -> Spectrogram:
    """Orthonormal DCT-II of each log-mel column, first ``n_mfcc`` rows."""
    if n_mfcc > mel_db.n_bins:
        raise ValueError(f"n_mfcc={n_mfcc} exceeds the {mel_db.n_bins} mel bands")
    coeffs = scipy.fft.dct(mel_db.data, type=2, norm="ortho", axis=0)[:n_mfcc]
    return mel_db.replace(coeffs, bin_axis="cepstral")


def chroma_filterbank(cfg: DspConfig) -> np.ndarray:
    """``[12 x bins]`` map folding FFT bins onto pitch classes C..B.

    Each bin's energy is split linearly between the two nearest pitch
    classes on the equal-tempered scale (A4 = 440 Hz).
    """
    freqs = cfg.fft_frequencies()
    bank = np.zeros((12, freqs.size))
    usable = np.flatnonzero((freqs >= cfg.chroma_fmin) & (freqs <= cfg.upper_hz))
    midi = 69.0 + 12.0 * np.log2(freqs[usable] / 440.0)
    low = np.floor(midi)
    frac = midi - low
    np.add.at(bank, (low.astype(int) % 12, usable), 1.0 - frac)
    np.add.at(bank, ((low.astype(int) + 1) % 12, usable), frac)
    return bank


def chromagram(power: Spectrogram, cfg: DspConfig) -> Spectrogram:
    if power.bin_axis != "linear-hz":
        raise ValueError("chromagram expects a linear-frequency power spectrogram")
    raw = chroma_filterbank(cfg) @ power.data
    peak = raw.max(axis=0, keepdims=True)
    out = np.divide(raw, peak, out=np.zeros_like(raw), where=peak > 0)
    return power.replace(out, bin_axis="chroma")


def contrast_band_edges(cfg: DspConfig) -> np.ndarray:
    """Band edges in Hz: ``[0, f0, 2 f0, ..., f0 2**n, nyquist]``."""
    octaves = cfg.contrast_fmin * 2.0 ** np.arange(cfg.n_contrast_bands + 1)
    if octaves[-1] > cfg.nyquist:
        raise ValueError("contrast bands extend past the Nyquist frequency")
    return np.concatenate([[0.0], octaves[:-1], [cfg.nyquist]])


def spectral_contrast(power: Spectrogram, cfg: DspConfig) -> Spectrogram:
    """Peak-minus-valley level in dB for each octave band.

    Peak and valley are the means of the top and bottom ``contrast_quantile``
    fraction of the band's sorted bins (at least one bin each).
    """
    if power.bin_axis != "linear-hz":
        raise ValueError("spectral contrast expects a linear-frequency power spectrogram")
    freqs = cfg.fft_frequencies()
    edges = contrast_band_edges(cfg)
    rows = []
    for k in range(len(edges) - 1):
        lo, hi = edges[k], edges[k + 1]
        last = k == len(edges) - 2
        in_band = (freqs >= lo) & ((freqs <= hi) if last else (freqs < hi))
        if not in_band.any():
            raise ValueError("insufficient frequency resolution")
        band = np.sort(power.data[in_band], axis=0)
        n = max(1, int(round(cfg.contrast_quantile * band.shape[0])))
        valley = band[:n].mean(axis=0)
        peak = band[-n:].mean(axis=0)
        floor = cfg.amplitude_floor
        rows.append(10.0 * (np.log10(np.maximum(peak, floor)) - np.log10(np.maximum(valley, floor))))
    return power.replace(np.vstack(rows), bin_axis="contrast-band", db=True)


def tonnetz_matrix() -> np.ndarray:
    """6x12 projection onto the fifths, minor-thirds and major-thirds circles."""
    pc = np.arange(12)
    angles = (7 * np.pi / 6, 3 * np.pi / 2, 2 * np.pi / 3)
    radii = (1.0, 1.0, 0.5)
    rows = []
    for angle, radius in zip(angles, radii):
        rows.append(radius * np.sin(pc * angle))
        rows.append(radius * np.cos(pc * angle))
    return np.vstack(rows)


def tonnetz(chroma: Spectrogram) -> Spectrogram:
    if chroma.n_bins != 12:
        raise ValueError("tonnetz expects a 12-row chromagram")
    total = np.abs(chroma.data).sum(axis=0, keepdims=True)
    unit = np.divide(chroma.data, total, out=np.zeros_like(chroma.data), where=total > 0)
    return chroma.replace(tonnetz_matrix() @ unit, bin_axis="tonnetz-dim", db=False)


def hpss(power: Spectrogram, cfg: DspConfig) -> tuple[Spectrogram, Spectrogram]:
    """Median-filter HPSS; harmonic + percussive == input.

    Masks are Wiener-style ``H**p / (H**p + P**p)`` with ``p = cfg.hpss_power``;
    ``p == 0`` selects a binary mask instead.
    """
    if power.bin_axis != "linear-hz":
        raise ValueError("hpss expects a linear-frequency power spectrogram")
    S = power.data
    k = cfg.hpss_kernel
    harm = scipy.ndimage.median_filter(S, size=(1, k), mode="reflect")
    perc = scipy.ndimage.median_filter(S, size=(k, 1), mode="reflect")
    if cfg.hpss_power == 0:
        mask = (harm > perc).astype(np.float64)
    else:
        hp, pp = harm**cfg.hpss_power, perc**cfg.hpss_power
        denom = hp + pp
        mask = np.divide(hp, denom, out=np.full_like(S, 0.5), where=denom > 0)
    harmonic = mask * S
    return power.replace(harmonic), power.replace(S - harmonic)


def harmonic_percussive_mel(power: Spectrogram, cfg: DspConfig) -> Spectrogram:
    """Mean of the dB mel spectrograms of the harmonic and percussive parts."""
    harmonic, percussive = hpss(power, cfg)
    h_db = power_to_db(mel_spectrogram(harmonic, cfg, cfg.hp_mel_rows), cfg)
    p_db = power_to_db(mel_spectrogram(percussive, cfg, cfg.hp_mel_rows), cfg)
    return h_db.replace(0.5 * (h_db.data + p_db.data))


BLOCK_NAMES = ("mfcc", "mel", "chroma", "contrast", "tonnetz", "hp_mel")


def block_heights(cfg: DspConfig) -> dict[str, int]:
    return {
        "mfcc": cfg.n_mfcc,
        "mel": cfg.n_mels,
        "chroma": cfg.n_chroma,
        "contrast": cfg.n_contrast_bands + 1,
        "tonnetz": 6,
        "hp_mel": cfg.hp_mel_rows,
    }


def extract_blocks(samples, cfg: DspConfig) -> dict[str, Spectrogram]:
    """All six feature blocks of one signal, sharing a single STFT."""
    power = stft(samples, cfg)
    mel_db = power_to_db(mel_spectrogram(power, cfg), cfg)
    chroma = chromagram(power, cfg)
    return {
        "mfcc": mfcc(mel_db, cfg.n_mfcc),
        "mel": mel_db,
        "chroma": chroma,
        "contrast": spectral_contrast(power, cfg),
        "tonnetz": tonnetz(chroma),
        "hp_mel": harmonic_percussive_mel(power, cfg),
    }
