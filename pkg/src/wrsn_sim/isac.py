"""Ranging chain: chirp pulse, echo synthesis, matched filtering, distance
estimation, and the probabilistic sensing decision.

The estimator operates on echo samples only; `truth_delay` exists for test
oracles and is never read by any estimation path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, IsacConfig


class WindowError(ValueError):
    """Echo delay does not fit the observation window."""


class DegenerateInputError(ValueError):
    """Estimator input carries no signal at all."""


@dataclass
class ChirpSignal:
    samples: np.ndarray
    sample_rate: float
    bandwidth: float
    duration: float


@dataclass
class EchoObservation:
    samples: np.ndarray
    snr_db: float
    truth_delay: float  # seconds; for scoring only


@dataclass
class DetectionResult:
    estimated_distance: float
    peak_lag: int
    peak_magnitude: float
    detected: bool


def generate_chirp(isac: IsacConfig) -> ChirpSignal:
    """Unit-modulus complex baseband linear FM pulse sweeping -B/2..B/2."""
    n = isac.n_samples
    if n < 64:
        raise ConfigError(f"chirp must span at least 64 samples, got {n}")
    ts = 1.0 / isac.sample_rate
    t = np.arange(n) * ts - isac.pulse_duration / 2.0
    phase = math.pi * (isac.chirp_bandwidth / isac.pulse_duration) * t * t
    return ChirpSignal(
        samples=np.exp(1j * phase),
        sample_rate=isac.sample_rate,
        bandwidth=isac.chirp_bandwidth,
        duration=isac.pulse_duration,
    )


def round_trip_delay(distance: float, isac: IsacConfig) -> float:
    return 2.0 * distance / isac.wave_speed


def simulate_echo(
    signal: ChirpSignal,
    distance: float,
    isac: IsacConfig,
    rng: np.random.Generator,
    window_samples: int | None = None,
) -> EchoObservation:
    """Integer-sample delayed copy of the pulse plus circular white Gaussian
    noise at the configured per-sample SNR. snr_db = +inf disables noise."""
    if distance < 0:
        raise ValueError(f"negative distance {distance}")
    tau = round_trip_delay(distance, isac)
    delay_samples = int(round(tau * isac.sample_rate))
    n = len(signal.samples)
    if window_samples is None:
        window_samples = delay_samples + n
    if delay_samples + n > window_samples:
        raise WindowError(
            f"delay of {delay_samples} samples exceeds window of {window_samples}"
        )
    samples = np.zeros(window_samples, dtype=np.complex128)
    samples[delay_samples:delay_samples + n] = signal.samples
    if math.isfinite(isac.snr_db):
        sigma = math.sqrt(10.0 ** (-isac.snr_db / 10.0) / 2.0)
        noise = rng.standard_normal(2 * window_samples)
        samples += sigma * (noise[:window_samples] + 1j * noise[window_samples:])
    return EchoObservation(samples=samples, snr_db=isac.snr_db, truth_delay=tau)


class MatchedFilter:
    """Cross-correlator for one reference pulse; caches the pulse spectrum per
    FFT size so repeated calls in the simulation loop stay cheap."""

    def __init__(self, signal: ChirpSignal):
        self.signal = signal
        self.n = len(signal.samples)
        self._spectra: dict[int, np.ndarray] = {}

    def _spectrum(self, nfft: int) -> np.ndarray:
        spec = self._spectra.get(nfft)
        if spec is None:
            spec = np.conj(np.fft.fft(self.signal.samples, nfft))
            self._spectra[nfft] = spec
        return spec

    def delay(self, echo_samples: np.ndarray) -> tuple[int, float]:
        m = len(echo_samples)
        if m <= self.n:
            raise ValueError("echo must be longer than the reference pulse")
        if not np.any(echo_samples):
            raise DegenerateInputError("all-zero echo")
        nfft = 1 << (m - 1).bit_length()
        corr = np.fft.ifft(np.fft.fft(echo_samples, nfft) * self._spectrum(nfft))
        valid = np.abs(corr[: m - self.n + 1])
        lag = int(np.argmax(valid))  # lowest lag wins exact ties
        return lag, float(valid[lag])


def matched_filter_delay(signal: ChirpSignal, echo) -> tuple[int, float]:
    """Peak of |cross-correlation| over nonnegative lags: (peak_lag, magnitude)."""
    samples = echo.samples if isinstance(echo, EchoObservation) else np.asarray(echo)
    return MatchedFilter(signal).delay(samples)


def estimate_distance(peak_lag: int, isac: IsacConfig) -> float:
    if peak_lag < 0:
        raise ValueError(f"negative peak lag {peak_lag}")
    return isac.wave_speed * peak_lag / (2.0 * isac.sample_rate)


def elfes_probability(distance: float, sensing_range: float, isac: IsacConfig) -> float:
    """Elfes-style detection probability: certain inside r_s - r_e, exponential
    decay across the uncertainty annulus, zero beyond r_s + r_e."""
    if distance < 0:
        raise ValueError(f"negative distance {distance}")
    inner = sensing_range - isac.elfes_r_uncertain
    if distance <= inner:
        return 1.0
    if distance <= sensing_range + isac.elfes_r_uncertain:
        return math.exp(-isac.elfes_lambda * (distance - inner) ** isac.elfes_beta)
    return 0.0


def probabilistic_detect(
    distance: float,
    sensing_range: float,
    isac: IsacConfig,
    rng: np.random.Generator,
) -> bool:
    return rng.random() < elfes_probability(distance, sensing_range, isac)


def run_detection_chain(
    filt: MatchedFilter,
    true_distance: float,
    sensing_range: float,
    isac: IsacConfig,
    noise_rng: np.random.Generator,
    detection_rng: np.random.Generator,
    window_samples: int | None = None,
) -> DetectionResult:
    """Full chain: echo at the true distance, matched filter, distance estimate,
    then a sensing-model draw gated on the ESTIMATED distance."""
    echo = simulate_echo(filt.signal, true_distance, isac, noise_rng, window_samples)
    lag, magnitude = filt.delay(echo.samples)
    est = estimate_distance(lag, isac)
    detected = probabilistic_detect(est, sensing_range, isac, detection_rng)
    return DetectionResult(
        estimated_distance=est, peak_lag=lag, peak_magnitude=magnitude, detected=detected
    )


def isac_event(device, mcvs, base_state, config, noise_rng, detection_rng):
    """Ranging event for one queued requesting device.

    Picks the nearest eligible MCV whose queue holds the device (ties to the
    lower id); if it sits within r_s + r_e, runs the detection chain and on
    success locks the device to that MCV. Returns (mcv_id, DetectionResult)
    or None.
    """
    from .model import McvState
    from . import scheduler

    dx, dy = device.position
    best = None
    best_d = math.inf
    for mcv in mcvs:
        if mcv.state not in (McvState.IDLE, McvState.TRAVELING):
            continue
        queue = base_state.queues.get(mcv.id, ())
        ids = [e.device_id if isinstance(e, scheduler.QueueEntry) else int(e) for e in queue]
        if device.id not in ids:
            continue
        held = getattr(mcv, "current_target", None)
        req_holder = base_state.locked_mcv(held) if held is not None else None
        if held is not None and held != device.id and req_holder == mcv.id:
            continue  # already committed to another device
        d = math.hypot(mcv.position[0] - dx, mcv.position[1] - dy)
        if d < best_d:
            best, best_d = mcv, d
    if best is None or best_d > config.sensing_range + config.isac.elfes_r_uncertain:
        return None
    filt = MatchedFilter(generate_chirp(config.isac))
    result = run_detection_chain(
        filt, best_d, config.sensing_range, config.isac, noise_rng, detection_rng
    )
    if not result.detected:
        return None
    scheduler.lock_assignment(base_state, device.id, best.id)
    return best.id, result
