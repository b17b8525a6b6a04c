"""
End-to-end orchestration: analytic evaluation, sweeps and the simulated
generation chain simulate -> estimate -> extract -> test.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bits import BitBuffer, write_bitstream
from .config import RunConfig
from .errors import DegenerateInputError, FormatError, InvalidParameterError, NoSolutionError, PipelineError, SiqrngError
from .extractor import extract_stream, output_ratio, plan_extraction, seed_bits_required
from .model import (
    SystemModel,
    basis_event_probabilities,
    click_probabilities,
    expected_tally,
    x_basis_qber,
)
from .montecarlo import ClickTally, double_click_assignment, simulate, tally_to_estimation_input
from .security import EstimationInput, RateReport, SecurityParams, analyze, epsilon_total, mismatch_factor
from .stattests import run_battery

# Philox substream reserved for simulated Toeplitz seeds; chunk indices never reach it
_TOEPLITZ_STREAM = (1 << 64) - 2


def zero_report(model: SystemModel, sec: SecurityParams, e_bx=None) -> RateReport:
    """Report for a configuration that certifies no randomness."""
    try:
        factor = mismatch_factor(model.eta_0, model.eta_1)
    except InvalidParameterError:
        factor = 0.0
    return RateReport(
        theta=0.0,
        epsilon_theta=1.0,
        e_bx=e_bx,
        n_z_single=0.0,
        mismatch_factor=factor,
        extractable_bits=0.0,
        rate_bps=0.0,
        epsilon_total=epsilon_total(1.0, sec.t_e),
    )


def analytic_estimation_input(model: SystemModel) -> EstimationInput:
    """Finite-key inputs predicted by the response model over ``f_hz * t_s`` pulses."""
    e_bx = x_basis_qber(click_probabilities(model))
    tally = expected_tally(model)
    if tally.n_Z_tol + tally.n_X_tol <= 0 or model.t_s <= 0:
        raise DegenerateInputError("the model predicts no detection events")
    return EstimationInput(
        n_total=tally.n_Z_tol + tally.n_X_tol,
        p_x=model.p_x,
        e_bx=e_bx,
        n_z_single=tally.n_Z_single,
        n_x=tally.n_X_tol,
        eta_0=model.eta_0,
        eta_1=model.eta_1,
        duration_s=model.t_s,
    )


def analytic_rate(model: SystemModel, sec: SecurityParams) -> RateReport:
    """
    Rate predicted by the response model.

    Configurations with no detection events, or too few to reach the
    failure target, certify nothing and give a zero-rate report.
    """
    try:
        inp = analytic_estimation_input(model)
    except DegenerateInputError:
        return zero_report(model, sec)
    try:
        return analyze(inp, sec)
    except (NoSolutionError, InvalidParameterError):
        return zero_report(model, sec, inp.e_bx)


def model_report(cfg: RunConfig) -> dict:
    model, sec = cfg.model(), cfg.security()
    probs = click_probabilities(model)
    events = basis_event_probabilities(probs)
    try:
        e_bx = x_basis_qber(probs)
    except DegenerateInputError:
        e_bx = None
    return {
        "config": cfg.to_dict(),
        "click_probabilities": vars(probs).copy(),
        "event_probabilities": events.classes(),
        "expected_tally": expected_tally(model).to_dict(),
        "e_bx": e_bx,
        "rate": analytic_rate(model, sec).to_dict(),
    }


def sweep(cfg: RunConfig, mu_min, mu_max, points):
    """Analytic final rate on an evenly spaced grid of mean photon numbers."""
    if not (0 <= mu_min < mu_max) or not all(map(math.isfinite, (mu_min, mu_max))):
        raise InvalidParameterError("mu_min/mu_max", f"need 0 <= mu_min < mu_max, got {mu_min}, {mu_max}")
    if points < 2:
        raise InvalidParameterError("points", f"need at least 2 grid points, got {points}")
    base, sec = cfg.model(), cfg.security()
    rows = []
    for mu in np.linspace(mu_min, mu_max, points):
        rows.append((float(mu), analytic_rate(base.replace(mu=float(mu)), sec).rate_bps))
    return rows


def derive_toeplitz_seed(seed, n_bits) -> BitBuffer:
    """
    Seed bits from the run seed, for simulation only.

    These bits come from a deterministic pseudo-random generator and are not
    suitable for a deployed generator, which needs a separately supplied
    random seed file.
    """
    key = np.array([seed, _TOEPLITZ_STREAM], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    n_bytes = (n_bits + 7) // 8
    return BitBuffer(rng.bytes(n_bytes), n_bytes * 8)[:n_bits]


def estimate(tally: ClickTally, cfg: RunConfig) -> RateReport:
    return analyze(tally_to_estimation_input(tally, cfg.model()), cfg.security())


def extract(raw: BitBuffer, report: RateReport, block_n, seed_bits: BitBuffer | None = None,
            seed=0, fresh_seed=False, threads=1) -> BitBuffer:
    ratio = output_ratio(report.extractable_bits, report.n_z_single)
    need = seed_bits_required(len(raw), block_n, ratio, fresh_seed)
    if seed_bits is None:
        seed_bits = derive_toeplitz_seed(seed, need)
    return extract_stream(raw, seed_bits, ratio, block_n=block_n, fresh_seed=fresh_seed, threads=threads)


@dataclass
class PipelineResult:
    tally: ClickTally
    raw: BitBuffer
    report: RateReport
    m_per_block: int
    final: BitBuffer
    battery: list | None

    @property
    def battery_passed(self):
        return self.battery is None or all(r.passed for r in self.battery)


def run_pipeline(cfg: RunConfig, threads=1, sample_bits=100_000, alpha=0.01, battery=True,
                 double_clicks=False, seed_bits: BitBuffer | None = None, fresh_seed=False):
    """
    Simulate, estimate, extract and test.

    Errors are re-raised as :class:`PipelineError` labelled with the failing
    stage.
    """

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SiqrngError as exc:
            raise PipelineError(name, exc) from exc

    model = cfg.model()
    tally, raw = stage("simulation", simulate, model, cfg.n_pulses, cfg.seed, threads=threads)
    if double_clicks:
        raw = stage("simulation", double_click_assignment, raw, tally, cfg.seed)
    report = stage("estimation", estimate, tally, cfg)
    m_per_block, _ = stage("planning", plan_extraction, report, cfg.block_n)
    final = stage("extraction", extract, raw, report, cfg.block_n, seed_bits=seed_bits,
                  seed=cfg.seed, fresh_seed=fresh_seed, threads=threads)
    reports = None
    if battery:
        reports = stage("battery", run_battery, final, sample_bits, alpha, threads=threads)
    return PipelineResult(tally, raw, report, m_per_block, final, reports)


# ---- file formats --------------------------------------------------------


def write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def read_json(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def tally_document(tally: ClickTally, cfg: RunConfig):
    return {"config": cfg.to_dict(), "tally": tally.to_dict()}


def load_tally(path) -> ClickTally:
    """Read a tally file; either a bare count object or one under ``"tally"``."""
    doc = read_json(path)
    counts = doc.get("tally", doc) if isinstance(doc, dict) else None
    if not isinstance(counts, dict):
        raise InvalidParameterError("tally", "tally file must hold a JSON object of counts")
    return ClickTally.from_dict(counts)


def report_document(report: RateReport, cfg: RunConfig, **extra):
    doc = {"config": cfg.to_dict(), "rate": report.to_dict()}
    doc.update(extra)
    return doc


def load_report(path) -> RateReport:
    doc = read_json(path)
    rate = doc.get("rate", doc)
    try:
        return RateReport(**rate)
    except TypeError as exc:
        raise InvalidParameterError("rate", f"report file is missing fields: {exc}") from exc


def battery_document(reports, cfg: RunConfig | None = None, sample_bits=None):
    doc = {
        "sample_bits": sample_bits,
        "passed": all(r.passed for r in reports),
        "tests": [r.to_dict() for r in reports],
    }
    if cfg is not None:
        doc["config"] = cfg.to_dict()
    return doc


def write_pipeline_outputs(result: PipelineResult, cfg: RunConfig, out_dir, sample_bits=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    write_json(out / "tally.json", tally_document(result.tally, cfg))
    write_bitstream(out / "raw.siqb", result.raw)
    write_json(out / "report.json", report_document(result.report, cfg, m_per_block=result.m_per_block))
    write_bitstream(out / "final.siqb", result.final)
    if result.battery is not None:
        write_json(out / "battery.json", battery_document(result.battery, cfg, sample_bits))

