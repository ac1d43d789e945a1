"""Audio ingestion, preprocessing and spectrogram matrices.

WAV decoding is delegated to :mod:`scipy.io.wavfile`; a light chunk scan runs
first so malformed files fail with a byte offset instead of a generic
message. Integer PCM is normalized by ``2**(bits - 1)``.
"""

from __future__ import annotations

import hashlib
import io
import logging
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal.windows import hann

from .energy import Signal
from .errors import InvalidInputError, WavFormatError

log = logging.getLogger(__name__)

FMT_PCM = 0x0001
FMT_FLOAT = 0x0003
FMT_EXTENSIBLE = 0xFFFE
DB_FLOOR = 1e-12

_SUPPORTED = {(FMT_PCM, 16), (FMT_PCM, 24), (FMT_PCM, 32), (FMT_FLOAT, 32), (FMT_FLOAT, 64)}


@dataclass(frozen=True)
class AudioClip:
    """Channels as rows of a ``(channels, samples)`` float64 array."""

    channels: np.ndarray
    sample_rate_hz: int | None
    source_digest: str

    def __post_init__(self):
        ch = np.atleast_2d(np.asarray(self.channels, dtype=np.float64))
        if ch.shape[1] == 0:
            raise InvalidInputError("audio has no samples")
        if self.sample_rate_hz is not None and self.sample_rate_hz <= 0:
            raise InvalidInputError("sample rate must be positive")
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def __len__(self) -> int:
        return self.channels.shape[1]


def digest(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def scan_wav(data: bytes) -> tuple[int, int, int]:
    """Validate the RIFF layout; return ``(format_tag, bits, channels)``."""
    if len(data) < 12:
        raise WavFormatError("file too short for a RIFF header", len(data))
    if data[0:4] != b"RIFF":
        raise WavFormatError(f"not a RIFF file (found {data[0:4]!r})", 0)
    if data[8:12] != b"WAVE":
        raise WavFormatError(f"RIFF form type is {data[8:12]!r}, not WAVE", 8)
    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + size > len(data):
                raise WavFormatError(f"fmt chunk of size {size} is malformed or truncated", pos)
            tag, channels, _, _, _, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == FMT_EXTENSIBLE:
                if size < 40:
                    raise WavFormatError("WAVE_FORMAT_EXTENSIBLE fmt chunk shorter than 40 bytes",
                                         pos)
                (tag,) = struct.unpack_from("<H", data, body + 24)
            if (tag, bits) not in _SUPPORTED:
                raise WavFormatError(f"unsupported codec: format tag {tag:#06x}, {bits} bits",
                                     body)
            if channels < 1:
                raise WavFormatError("fmt chunk declares zero channels", body + 2)
            fmt = (tag, bits, channels)
        elif cid == b"data":
            if fmt is None:
                raise WavFormatError("data chunk precedes fmt chunk", pos)
            if body + size > len(data):
                raise WavFormatError(
                    f"data chunk declares {size} bytes but only {len(data) - body} remain", pos)
            if size % (fmt[2] * fmt[1] // 8):
                raise WavFormatError("data chunk size is not a whole number of frames", pos + 4)
            return fmt
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavFormatError("no fmt chunk found", pos)
    raise WavFormatError("no data chunk found", pos)


def _normalize(raw: np.ndarray, bits: int) -> np.ndarray:
    if raw.dtype.kind == "f":
        return raw.astype(np.float64)
    if raw.dtype == np.int16:
        return raw.astype(np.float64) / 32768.0
    if raw.dtype == np.int32:
        # scipy returns 24-bit samples left-aligned in int32
        return raw.astype(np.float64) / 2.0 ** 31
    raise WavFormatError(f"unexpected decoded sample type {raw.dtype} for {bits}-bit audio")


def load_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file (PCM 16/24/32-bit, IEEE float 32/64-bit)."""
    data = Path(path).read_bytes()
    _, bits, _ = scan_wav(data)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", wavfile.WavFileWarning)
        try:
            rate, raw = wavfile.read(io.BytesIO(data))
        except ValueError as exc:
            raise WavFormatError(f"could not decode WAV data: {exc}") from exc
    y = _normalize(raw, bits)
    channels = y[None, :] if y.ndim == 1 else y.T
    return AudioClip(channels, int(rate), digest(data))


def write_wav(path, channels, sample_rate_hz: int, fmt: str = "pcm16") -> None:
    """Write amplitudes in [-1, 1) as ``pcm16``, ``pcm32`` or ``float32``."""
    ch = np.atleast_2d(np.asarray(channels, dtype=np.float64))
    if fmt == "pcm16":
        out = np.clip(np.round(ch * 32768.0), -32768, 32767).astype(np.int16)
    elif fmt == "pcm32":
        out = np.clip(np.round(ch * 2.0 ** 31), -2 ** 31, 2 ** 31 - 1).astype(np.int32)
    elif fmt == "float32":
        out = ch.astype(np.float32)
    else:
        raise InvalidInputError(f"unknown WAV sample format {fmt!r}")
    wavfile.write(str(path), int(sample_rate_hz), out.T if out.shape[0] > 1 else out[0])


def load_raw(path, sample_rate_hz: int | None = None) -> AudioClip:
    """Headerless little-endian float64 samples, one channel."""
    data = Path(path).read_bytes()
    if len(data) % 8:
        raise InvalidInputError(f"raw file size {len(data)} is not a multiple of 8 bytes")
    return AudioClip(np.frombuffer(data, dtype="<f8"), sample_rate_hz, digest(data))


def load_csv(path, sample_rate_hz: int | None = None) -> AudioClip:
    """Single-column text file; a non-numeric first line is taken as a header."""
    data = Path(path).read_bytes()
    lines = data.decode("utf-8").splitlines()
    values = []
    for i, line in enumerate(lines):
        line = line.strip()
        if not line:
            continue
        if "," in line.rstrip(","):
            raise InvalidInputError(f"line {i + 1}: expected a single column")
        try:
            values.append(float(line.rstrip(",")))
        except ValueError:
            if i == 0:
                continue
            raise InvalidInputError(f"line {i + 1}: not a number: {line!r}") from None
    return AudioClip(np.array(values), sample_rate_hz, digest(data))


def load_any(path, sample_rate_hz: int | None = None) -> AudioClip:
    """Dispatch on extension: ``.wav``, ``.csv``/``.txt``, otherwise raw float64."""
    p = Path(path)
    if not p.is_file():
        raise InvalidInputError(f"no such file: {p}")
    ext = p.suffix.lower()
    if ext == ".wav":
        clip = load_wav(p)
        if sample_rate_hz is not None and sample_rate_hz != clip.sample_rate_hz:
            log.warning("ignoring --sample-rate %s; the WAV header says %s",
                        sample_rate_hz, clip.sample_rate_hz)
        return clip
    if ext in (".csv", ".txt"):
        return load_csv(p, sample_rate_hz)
    return load_raw(p, sample_rate_hz)


def preprocess(clip: AudioClip, channel: int | None = None,
               decimate: int | None = None) -> Signal:
    """Pick a channel, remove its mean and optionally decimate by block averaging.

    Block averaging is a length-``d`` moving average sampled at every
    ``d``-th point, giving ``floor(N / d)`` samples.
    """
    if channel is None:
        if clip.n_channels > 1:
            log.warning("%d channels present; using channel 0", clip.n_channels)
        channel = 0
    if not 0 <= channel < clip.n_channels:
        raise InvalidInputError(f"channel {channel} not in [0, {clip.n_channels})")
    y = clip.channels[channel]
    y = y - y.mean()
    rate = clip.sample_rate_hz
    if decimate is not None:
        if decimate < 1:
            raise InvalidInputError("decimate must be >= 1")
        if decimate > len(y):
            raise InvalidInputError(f"decimate={decimate} exceeds the signal length {len(y)}")
        if decimate > 1:
            m = len(y) // decimate
            y = y[:m * decimate].reshape(m, decimate).mean(axis=1)
            # dropping the tail can reintroduce a tiny offset
            y = y - y.mean()
            rate = None if rate is None else rate / decimate
    return Signal(y, rate)


@dataclass(frozen=True)
class Spectrogram:
    """``db[f, k]``: magnitude in dB of frequency row ``f`` in frame ``k``."""

    db: np.ndarray
    times: np.ndarray
    freqs: np.ndarray


def spectrogram(signal: Signal | np.ndarray, window_len: int = 1024,
                hop: int = 512) -> Spectrogram:
    """Hann-windowed STFT magnitudes in dB.

    ``times`` are frame centers (seconds with a sample rate, samples
    otherwise); ``freqs`` are Hz or cycles per sample likewise.
    """
    if not isinstance(signal, Signal):
        signal = Signal(signal)
    y = signal.samples
    if window_len < 16:
        raise InvalidInputError("window_len must be >= 16")
    if hop < 1:
        raise InvalidInputError("hop must be >= 1")
    if len(y) < window_len:
        raise InvalidInputError(f"signal length {len(y)} is shorter than the window")
    frames = np.lib.stride_tricks.sliding_window_view(y, window_len)[::hop]
    spec = np.fft.rfft(frames * hann(window_len, sym=False), axis=1)
    db = 20.0 * np.log10(np.abs(spec) + DB_FLOOR)
    rate = signal.sample_rate_hz
    centers = np.arange(frames.shape[0]) * hop + window_len / 2.0
    freqs = np.fft.rfftfreq(window_len, d=1.0 if rate is None else 1.0 / rate)
    times = centers if rate is None else centers / rate
    return Spectrogram(db.T.copy(), times, freqs)


def write_spectrogram_csv(spec: Spectrogram, path) -> None:
    """Matrix with a header row of frame times and a leading frequency column."""
    with open(path, "w", newline="") as fh:
        fh.write("freq," + ",".join(f"{t:.6f}" for t in spec.times) + "\n")
        for f, row in zip(spec.freqs, spec.db):
            fh.write(f"{f:.6f}," + ",".join(f"{v:.4f}" for v in row) + "\n")


def write_pgm(spec: Spectrogram, path, dynamic_range_db: float = 80.0) -> None:
    """8-bit binary graymap quick-look, high frequencies on top."""
    top = float(spec.db.max())
    scaled = np.clip((spec.db - (top - dynamic_range_db)) / dynamic_range_db, 0.0, 1.0)
    img = np.round(scaled[::-1] * 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
