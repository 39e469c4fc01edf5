"""Config-driven command line front end.

Subcommands
-----------
train       fit the 3T scalars for a scenario config, write a params JSON
            plus a training-report sidecar
sweep-iter  NMSE (dB) versus layer/iteration index, long-format CSV
sweep-snr   per-symbol MSE and symbol error rate versus SNR, long-format CSV
scatter     soft estimates of one or more blocks as scatter points, CSV
selftest    fast internal consistency battery

Exit codes: 0 ok, 2 bad arguments or config, 3 numerical divergence,
4 missing or invalid parameter file, 1 selftest failure.

Evaluation fans out over fixed-size trial chunks.  Chunk boundaries and
per-chunk RNG streams depend only on the config, seed and chunk index, and
chunk results are reduced in index order, so the CSV bytes are identical
for any CTISTA_THREADS setting (the env var only sets the worker count).
No timestamps are written anywhere.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from typing import Optional

import numpy as np

from . import __version__
from .baselines import AmpConfig, dft_receiver, widened_amp_recover
from .errors import ConfigError, DivergenceError
from .recovery import CtistaParams, ctista_batch, zf_detect
from .scenarios import (
    STREAM_EVAL,
    NmseAccumulator,
    Scenario,
    ScenarioConfig,
    calibrate_noise,
    generate_batch,
    initial_params,
    realize,
)
from .shrinkage import hard_decision
from .training import load_params, save_params, train_scenario

CHUNK_TRIALS = 100
SER_TARGET_ERRORS = 100


class ParamsFileProblem(Exception):
    """Raised when --params cannot be read or does not fit the config."""


# ---------------------------------------------------------------------------
# config files

_INT_FIELDS = {"n", "m", "depth", "seed", "train_k", "train_l", "trials"}
_FLOAT_FIELDS = {"p", "sigma_x2", "papr_db", "sigma2", "snr_db", "train_xi"}
_CONFIG_FIELDS = {f.name for f in fields(ScenarioConfig)}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, blanks ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"config line {lineno}: duplicate key {key!r}")
        if key in _INT_FIELDS:
            try:
                out[key] = int(value)
            except ValueError as exc:
                raise ConfigError(f"config line {lineno}: {key} needs an integer") from exc
        elif key in _FLOAT_FIELDS:
            try:
                out[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"config line {lineno}: {key} needs a number") from exc
        else:
            out[key] = value
    return out


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = parse_config_text(text)
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"incomplete config {path}: {exc}") from exc


def config_to_text(cfg: ScenarioConfig) -> str:
    """Serialize a config to the key = value format (round-trips)."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# shared plumbing

def _fmt(v) -> str:
    return format(float(v), ".10g")


def _thread_count() -> int:
    raw = os.environ.get("CTISTA_THREADS", "1")
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigError(f"CTISTA_THREADS must be an integer, got {raw!r}") from exc
    return max(1, count)


def _chunk_map(fn, work_items):
    """Apply fn over work items, preserving submission order in the result."""
    threads = _thread_count()
    if threads == 1 or len(work_items) <= 1:
        return [fn(item) for item in work_items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, work_items))


def _chunk_sizes(total: int, chunk: int = CHUNK_TRIALS):
    sizes = []
    left = total
    while left > 0:
        take = min(chunk, left)
        sizes.append(take)
        left -= take
    return sizes


def _resolve_params(cfg: ScenarioConfig, sc: Scenario, args) -> tuple[CtistaParams, str]:
    if args.untrained and args.params:
        raise ConfigError("--params and --untrained are mutually exclusive")
    if args.untrained:
        return initial_params(sc), "untrained"
    if not args.params:
        raise ConfigError("need --params FILE or --untrained")
    try:
        params, _ = load_params(
            args.params, expect_depth=cfg.depth, expect_digest=cfg.digest()
        )
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        raise ParamsFileProblem(f"parameter file {args.params}: {exc}") from exc
    return params, "file"


def _baselines(args, cfg: ScenarioConfig) -> list:
    chosen = []
    for name in args.baseline or []:
        if name in chosen:
            continue
        if name == "amp" and cfg.kind != "cs-sparse":
            raise ConfigError("the amp baseline needs the Gaussian-Bernoulli scenario")
        if name == "dft" and cfg.matrix != "idft":
            raise ConfigError("the dft baseline needs the idft matrix ensemble")
        chosen.append(name)
    return chosen


def _provenance(cfg: ScenarioConfig, command: str, extra: str = "") -> str:
    line = (
        f"# ctista {__version__} command={command} "
        f"config={cfg.digest()} seed={cfg.seed}"
    )
    return line + (f" {extra}" if extra else "")


def _write_text(path: Optional[str], text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        changes["trials"] = args.trials
    return replace(cfg, **changes) if changes else cfg


def _default_snr_grid(cfg: ScenarioConfig) -> list:
    hi = 20.0 if cfg.kind == "clipped-ofdm" else 25.0
    return [5.0 + 2.5 * k for k in range(int((hi - 5.0) / 2.5) + 1)]


def _parse_grid(text: str) -> list:
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --snr-grid {text!r}") from exc
    if not grid:
        raise ConfigError("--snr-grid is empty")
    return grid


def _amp_config(cfg: ScenarioConfig, sigma2: float) -> AmpConfig:
    return AmpConfig(
        iterations=cfg.depth, p=cfg.p, nonzero_var=cfg.sigma_x2, noise_var=sigma2
    )


# ---------------------------------------------------------------------------
# train

def _report_sidecar_path(params_path: str) -> str:
    base, _ = os.path.splitext(params_path)
    return base + ".report.json"


def _cmd_train(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if args.out in (None, "-"):
        raise ConfigError("train writes a parameter JSON; give --out FILE")
    sc = realize(cfg)

    def progress(gen, step, loss):
        print(
            f"gen {gen}/{cfg.depth} step {step + 1}/{cfg.train_k} loss {loss:.6g}",
            file=sys.stderr,
        )

    report = train_scenario(sc, gradient=args.gradient, progress=progress)
    save_params(args.out, report.params, scenario_digest=cfg.digest(), seed=cfg.seed)
    sidecar = {
        "version": 1,
        "command": "train",
        "scenario_digest": cfg.digest(),
        "seed": cfg.seed,
        "depth": cfg.depth,
        "batches": cfg.train_k,
        "batch_cols": cfg.train_l,
        "learning_rate": cfg.train_xi,
        "gradient_mode": report.gradient_mode,
        "adjoint_rel_err": report.adjoint_rel_err,
        "losses": report.losses.tolist(),
    }
    with open(_report_sidecar_path(args.out), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"trained {cfg.kind} depth {cfg.depth} ({report.gradient_mode} gradient) "
        f"-> {args.out}",
        file=sys.stderr,
    )
    return 0


# ---------------------------------------------------------------------------
# sweep-iter

def _cmd_sweep_iter(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    sc = realize(cfg)
    params, params_src = _resolve_params(cfg, sc, args)
    detectors = ["ctista"] + _baselines(args, cfg)
    sigma2 = calibrate_noise(sc)
    depth = cfg.depth

    sums = {d: np.zeros(depth) for d in detectors}
    sqs = {d: np.zeros(depth) for d in detectors}
    counts = {d: 0 for d in detectors}

    def run_chunk(item):
        idx, size = item
        batch = generate_batch(sc, size, sc.rng(STREAM_EVAL, idx), sigma2)
        norms = np.sum(np.abs(batch.x) ** 2, axis=0)
        good = norms > 0
        out = {}
        iterates = ctista_batch(sc.model, params, batch.y, collect_iterates=True)
        out["ctista"] = _layer_ratios(iterates, batch.x, norms, good)
        if "amp" in detectors:
            amp_cfg = _amp_config(cfg, sigma2)
            stack = np.empty((depth, cfg.n, size), dtype=np.complex128)
            for j in range(size):
                _, per_iter = widened_amp_recover(sc.a_mat, batch.y[:, j], amp_cfg)
                stack[:, :, j] = per_iter
            out["amp"] = _layer_ratios(stack, batch.x, norms, good)
        for d in ("zf", "dft"):
            if d not in detectors:
                continue
            if d == "zf":
                est = zf_detect(sc.model.w_mat, batch.y)
            else:
                est = dft_receiver(batch.y, cfg.n, sc.constellation)[0]
            flat = np.sum(np.abs(est - batch.x) ** 2, axis=0)[good] / norms[good]
            out[d] = (
                np.full(depth, np.sum(flat)),
                np.full(depth, np.sum(flat**2)),
                int(np.sum(good)),
            )
        return out

    work = list(enumerate(_chunk_sizes(cfg.trials)))
    for result in _chunk_map(run_chunk, work):
        for d in detectors:
            ratio_sums, ratio_sqs, n_good = result[d]
            sums[d] += ratio_sums
            sqs[d] += ratio_sqs
            counts[d] += n_good

    lines = [_provenance(cfg, "sweep-iter", f"trials={cfg.trials} params={params_src}")]
    lines.append("t,algorithm,nmse_db,trials,stderr_db")
    for t in range(depth):
        for d in detectors:
            acc = NmseAccumulator()
            acc.sum_ratio = float(sums[d][t])
            acc.sum_ratio_sq = float(sqs[d][t])
            acc.count = counts[d]
            lines.append(
                f"{t + 1},{d},{_fmt(acc.db())},{acc.count},{_fmt(acc.stderr_db())}"
            )
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _layer_ratios(stack, x, norms, good):
    """Per-layer sum and sum of squares of per-trial error ratios."""
    err = np.sum(np.abs(stack - x[None, :, :]) ** 2, axis=1)  # (depth, L)
    ratios = err[:, good] / norms[good]
    return np.sum(ratios, axis=1), np.sum(ratios**2, axis=1), int(np.sum(good))


# ---------------------------------------------------------------------------
# sweep-snr

def _cmd_sweep_snr(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    sc = realize(cfg)
    params, params_src = _resolve_params(cfg, sc, args)
    detectors = ["ctista"] + _baselines(args, cfg)
    grid = _parse_grid(args.snr_grid) if args.snr_grid else _default_snr_grid(cfg)
    with_ser = sc.constellation is not None
    cap = args.max_trials if args.max_trials else 10 * cfg.trials
    if cap < cfg.trials:
        raise ConfigError("--max-trials must be >= trials")

    def estimates_for(batch):
        out = {"ctista": ctista_batch(sc.model, params, batch.y)}
        if "zf" in detectors:
            out["zf"] = zf_detect(sc.model.w_mat, batch.y)
        if "dft" in detectors:
            out["dft"] = dft_receiver(batch.y, cfg.n, sc.constellation)[0]
        if "amp" in detectors:
            amp_cfg = _amp_config(cfg, batch.sigma2)
            est = np.empty_like(batch.x)
            for j in range(batch.y.shape[1]):
                est[:, j], _ = widened_amp_recover(sc.a_mat, batch.y[:, j], amp_cfg)
            out["amp"] = est
        return out

    rows = []
    for p_idx, snr_db in enumerate(grid):
        sigma2 = calibrate_noise(sc, snr_db)
        err_sq = {d: 0.0 for d in detectors}
        sym_err = {d: 0 for d in detectors}
        n_sym = 0
        total = 0
        next_chunk = 0
        while True:
            wave = min(cfg.trials, cap - total)
            if wave <= 0:
                break
            work = []
            for size in _chunk_sizes(wave):
                work.append((next_chunk, size))
                next_chunk += 1

            def run_chunk(item):
                idx, size = item
                batch = generate_batch(sc, size, sc.rng(STREAM_EVAL, p_idx, idx), sigma2)
                res = {}
                for d, est in estimates_for(batch).items():
                    sq = float(np.sum(np.abs(est - batch.x) ** 2))
                    errs = 0
                    if with_ser:
                        errs = int(np.sum(hard_decision(est, sc.constellation) != batch.x))
                    res[d] = (sq, errs)
                return res, size * cfg.n

            for res, syms in _chunk_map(run_chunk, work):
                n_sym += syms
                for d in detectors:
                    err_sq[d] += res[d][0]
                    sym_err[d] += res[d][1]
            total += wave
            if not with_ser:
                break
            if all(sym_err[d] >= SER_TARGET_ERRORS for d in detectors):
                break
        for d in detectors:
            ser_cell = _fmt(sym_err[d] / n_sym) if with_ser else ""
            rows.append(
                f"{_fmt(snr_db)},{d},{_fmt(err_sq[d] / n_sym)},{ser_cell},{total}"
            )
        print(f"snr {snr_db:g} dB done ({total} trials)", file=sys.stderr)

    lines = [
        _provenance(
            cfg, "sweep-snr", f"trials={cfg.trials} cap={cap} params={params_src}"
        ),
        "snr_db,algorithm,mse,ser,trials",
    ]
    lines.extend(rows)
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# scatter

def _cmd_scatter(args) -> int:
    """Soft (pre-decision) estimates of a few blocks as scatter points."""
    cfg = _apply_overrides(load_config(args.config), args)
    sc = realize(cfg)
    params, params_src = _resolve_params(cfg, sc, args)
    detectors = ["ctista"] + _baselines(args, cfg)
    trials = args.trials if args.trials is not None else 1
    sigma2 = calibrate_noise(sc)

    batch = generate_batch(sc, trials, sc.rng(STREAM_EVAL, 0), sigma2)
    clouds = [("ctista", ctista_batch(sc.model, params, batch.y))]
    for d in detectors[1:]:
        if d == "zf":
            clouds.append(("zf", zf_detect(sc.model.w_mat, batch.y)))
        elif d == "dft":
            clouds.append(("dft", dft_receiver(batch.y, cfg.n, sc.constellation)[0]))
        elif d == "amp":
            amp_cfg = _amp_config(cfg, sigma2)
            est = np.empty_like(batch.x)
            for j in range(trials):
                est[:, j], _ = widened_amp_recover(sc.a_mat, batch.y[:, j], amp_cfg)
            clouds.append(("amp", est))

    lines = [
        _provenance(cfg, "scatter", f"trials={trials} params={params_src}"),
        "re,im,algorithm",
    ]
    for name, cloud in clouds:
        flat = np.asarray(cloud).T.ravel()  # block-major, then component
        for z in flat:
            lines.append(f"{_fmt(z.real)},{_fmt(z.imag)},{name}")
    _write_text(args.out, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# selftest

def _cmd_selftest(args) -> int:
    from .nonlinearity import clip_map, wirtinger_fd
    from .numerics import pseudo_inverse, rng_stream, sample_cgaussian, widen, unwiden_vec
    from .recovery import CtistaModel
    from .shrinkage import ShrinkageFn
    from .training import verify_adjoint

    failures = []

    def check(name, ok):
        print(("ok   - " if ok else "FAIL - ") + name, file=sys.stderr)
        if not ok:
            failures.append(name)

    rng = rng_stream(7, 99)
    a = sample_cgaussian(0, 1.0, rng, 8 * 12).reshape(8, 12)
    w = pseudo_inverse(a)
    check("pseudo-inverse identity A W A = A", np.allclose(a @ w @ a, a, atol=1e-10))
    check("pseudo-inverse identity W A W = W", np.allclose(w @ a @ w, w, atol=1e-10))

    f = clip_map(1.3)
    z = sample_cgaussian(0, 1.0, rng, 64)
    z = z[f.nonsmooth_distance(z) > 1e-3]
    fd_z, fd_zc = wirtinger_fd(f, z)
    check(
        "clip Wirtinger derivatives match finite differences",
        np.allclose(fd_z, f.d_f_dz(z), atol=1e-6)
        and np.allclose(fd_zc, f.d_f_dzc(z), atol=1e-6),
    )

    v = sample_cgaussian(0, 1.0, rng, 12)
    a_w, v_w = widen(a, v)
    check(
        "widened real system reproduces the complex product",
        np.allclose(unwiden_vec(a_w @ v_w), a @ v, atol=1e-12),
    )

    model = CtistaModel.build(a, clip_map(2.0), ShrinkageFn.complex_soft(), 3)
    params = CtistaParams.initial(3, 0.01)
    x = sample_cgaussian(0, 1.0, rng, 12 * 6).reshape(12, 6)
    y = model.f.eval(a @ x) + sample_cgaussian(0, 0.01, rng, 8 * 6).reshape(8, 6)
    rel = verify_adjoint(model, params, y, x)
    check(f"analytic gradient matches finite differences (rel {rel:.2e})", rel <= 1e-4)

    cfg = ScenarioConfig(
        kind="cs-sparse", n=24, m=12, depth=4, seed=11, p=0.2, sigma_x2=1.0,
        sigma2=1e-3, train_k=1, train_l=8, trials=40,
    )
    sc = realize(cfg)
    p0 = CtistaParams.initial(cfg.depth, 1e-3)
    outs = []
    for _ in range(2):
        batch = generate_batch(sc, cfg.trials, sc.rng(STREAM_EVAL, 0))
        est = ctista_batch(sc.model, p0, batch.y)
        outs.append(est.tobytes())
    check("repeated evaluation is byte-identical", outs[0] == outs[1])

    if failures:
        print(f"selftest: {len(failures)} failure(s)", file=sys.stderr)
        return 1
    print("selftest: all checks passed", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctista",
        description="Trainable unrolled recovery for complex linear and "
        "clipped observation models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_params=True):
        p.add_argument("--config", required=True, help="scenario config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--trials", type=int, help="override the config trial count")
        if needs_params:
            p.add_argument("--out", default="-", help="output path (default stdout)")
            p.add_argument("--params", help="trained parameter JSON")
            p.add_argument(
                "--untrained",
                action="store_true",
                help="use the untrained initialization instead of --params",
            )
            p.add_argument(
                "--baseline",
                action="append",
                choices=("zf", "amp", "dft"),
                help="additional detector column (repeatable)",
            )

    p_train = sub.add_parser("train", help="fit the per-layer scalars")
    common(p_train, needs_params=False)
    p_train.add_argument(
        "--out",
        default=None,
        help="params JSON path (required; a .report.json sidecar "
        "is written next to it)",
    )
    p_train.add_argument(
        "--gradient",
        choices=("auto", "adjoint", "fd"),
        default="auto",
        help="gradient engine (default: probe adjoint, fall back to fd)",
    )
    p_train.set_defaults(func=_cmd_train)

    p_iter = sub.add_parser("sweep-iter", help="NMSE versus iteration CSV")
    common(p_iter)
    p_iter.set_defaults(func=_cmd_sweep_iter)

    p_snr = sub.add_parser("sweep-snr", help="MSE/SER versus SNR CSV")
    common(p_snr)
    p_snr.add_argument("--snr-grid", help="comma-separated SNR grid in dB")
    p_snr.add_argument(
        "--max-trials",
        type=int,
        help="escalation cap per SNR point (default 10x trials)",
    )
    p_snr.set_defaults(func=_cmd_sweep_snr)

    p_sc = sub.add_parser("scatter", help="constellation scatter CSV")
    common(p_sc)
    p_sc.set_defaults(func=_cmd_scatter)

    p_self = sub.add_parser("selftest", help="fast internal consistency checks")
    p_self.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ParamsFileProblem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DivergenceError as exc:
        print(f"error: diverged at iteration {exc.iteration}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
