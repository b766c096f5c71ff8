"""Command line entry point: ``mmtail <command> --model FILE [options]``.

Commands: validate, analyze, check, simulate, tails, report, replay.
Every run writes ``manifest.json`` into ``--out-dir``; ``replay`` reruns a
manifest and reproduces its outputs byte for byte.

Exit codes: 0 success, 2 invalid model, 3 assumption violation,
4 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels, rng
from .errors import AssumptionViolation, InvalidModel, NumericalFailure
from .model import MmpModel, validate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ASSUMPTION = 3
EXIT_RUNTIME = 4


# ---------------------------------------------------------------- model files

def parse_model(doc: dict) -> MmpModel:
    """Model from its JSON form; raises ``InvalidModel`` on bad structure or
    failed validation."""
    try:
        states = [str(s) for s in doc["states"]]
        S = len(states)
        edges = {}
        for k, tr in enumerate(doc["transitions"]):
            i, j = int(tr["from"]), int(tr["to"])
            if not (0 <= i < S and 0 <= j < S):
                raise InvalidModel(f"transition {k}: state index out of range")
            if (i, j) in edges:
                raise InvalidModel(f"transition {k}: duplicate edge {i}->{j}")
            atoms = [(float(a["xi"]), float(a["rho"]), float(a["w"])) for a in tr["atoms"]]
            edges[(i, j)] = (float(tr["prob"]), atoms)
        c_xi, c_rho = float(doc["c_xi"]), float(doc["c_rho"])
    except InvalidModel:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidModel(f"malformed model document: {exc!r}") from None
    if not states:
        raise InvalidModel("model has no states")
    model = MmpModel.build(states, edges, c_xi, c_rho)
    report = validate(model)
    if not report.ok:
        raise InvalidModel(str(report), report)
    return model


def model_to_doc(model: MmpModel) -> dict:
    transitions = []
    for i, j in model.edges():
        law = model.edge_law(i, j)
        transitions.append({
            "from": i, "to": j, "prob": float(model.transition[i, j]),
            "atoms": [{"xi": float(a), "rho": float(b), "w": float(c)} for a, b, c in zip(law.xi, law.rho, law.w)],
        })
    return {"states": list(model.states), "transitions": transitions, "c_xi": model.c_xi, "c_rho": model.c_rho}


def load_model(path) -> tuple:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InvalidModel(f"cannot read model file: {exc}") from None
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidModel(f"model file is not valid JSON: {exc}") from None
    return parse_model(doc), hashlib.sha256(raw).hexdigest()


# ---------------------------------------------------------------- output helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv_rows(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _versions() -> dict:
    import scipy

    return {"mmtail": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


class Run:
    def __init__(self, args):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.quiet = args.quiet
        self.outputs = []

    def say(self, line: str) -> None:
        if not self.quiet:
            print(line)

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out_dir / name

    def manifest(self, model_hash: str) -> None:
        config = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func", "out_dir", "quiet")}
        config["model"] = str(Path(self.args.model).resolve())
        if config.get("samples"):
            config["samples"] = str(Path(config["samples"]).resolve())
        write_json(self.out_dir / "manifest.json", {
            "command": self.args.command,
            "config": config,
            "versions": _versions(),
            "rng_scheme": rng.SCHEME,
            "model_sha256": model_hash,
            "outputs": sorted(self.outputs),
        })


# ---------------------------------------------------------------- commands

def _parse_t_grid(text):
    """``lo:hi:points`` (geometric) or a comma-separated list."""
    if text is None:
        return None
    if ":" in text:
        lo, hi, k = text.split(":")
        return np.geomspace(float(lo), float(hi), int(k))
    return np.array(sorted(float(v) for v in text.split(",")))


def _analysis(run, model):
    from . import spectral

    a = run.args
    return spectral.analyze(model, tol=a.kappa_tol, beta_max=a.beta_max, spectral_tol=a.spectral_tol)


def _resolve_eps(eps, kappa_fn):
    from .montecarlo import eps_for_kappa

    if str(eps) == "auto":
        return eps_for_kappa(kappa_fn())
    return float(eps)


def cmd_validate(run, model, model_hash):
    run.say("ok")
    return EXIT_OK


def cmd_analyze(run, model, model_hash):
    sa = _analysis(run, model)
    write_json(run.path("analyze.json"), sa.to_dict())
    write_csv_rows(run.path("lambda.csv"), ("beta", "lambda"), sa.beta_grid)
    run.say(f"kappa = {sa.kappa!r}")
    run.say(f"drift = {sa.drift!r}")
    return EXIT_OK


def cmd_check(run, model, model_hash):
    from .structure import analyze_structure

    rep = analyze_structure(model, degeneracy_tol=run.args.degeneracy_tol, lattice_tol=run.args.lattice_tol)
    write_json(run.path("check.json"), rep.to_dict())
    for line in rep.summary_lines():
        run.say(line)
    return EXIT_OK


def _simulate(run, model, eps):
    from .montecarlo import simulate_batch

    a = run.args
    return simulate_batch(model, a.n, a.seed, workers=a.workers, eps_trunc=eps, min_terms=a.min_terms,
                          max_terms=a.max_terms)


def cmd_simulate(run, model, model_hash):
    from .montecarlo import save_samples

    eps = _resolve_eps(run.args.eps, lambda: _analysis(run, model).kappa)
    batch = _simulate(run, model, eps)
    out = run.args.out or "samples.csv"
    target = Path(out) if os.path.isabs(out) else run.out_dir / out
    if not os.path.isabs(out):
        run.outputs.append(out)
    save_samples(batch, target)
    write_json(run.path("simulate.json"), {"truncation": batch.truncation(), "seed": batch.seed,
                                           "scheme": batch.scheme, "n_per_state": run.args.n})
    run.say(f"wrote {sum(len(s) for s in batch.by_state)} samples to {target}")
    return EXIT_OK


def _write_tails(run, rep, prefix=""):
    write_csv_rows(run.path(prefix + "tails.csv"), ("state", "sign", "t", "t_kappa_surv", "band_lo", "band_hi"),
                   rep.curve_rows())
    write_json(run.path(prefix + "constants.json"), rep.constants_dict())


def cmd_tails(run, model, model_hash):
    from . import tails
    from .montecarlo import load_samples
    from .structure import analyze_structure

    a = run.args
    batch = load_samples(a.samples, model.n_states)
    spectral_analysis = None
    if a.kappa == "auto":
        spectral_analysis = _analysis(run, model)
        kappa = spectral_analysis.kappa
    else:
        kappa = float(a.kappa)
        try:
            spectral_analysis = _analysis(run, model)
        except (AssumptionViolation, NumericalFailure):
            spectral_analysis = None
    structure = analyze_structure(model)
    skip = structure.degenerate or spectral_analysis is None
    rep = tails.tail_report(model, batch, spectral=spectral_analysis, structure=structure, kappa=kappa,
                            t_grid=_parse_t_grid(a.t_grid), hill_k=a.hill_k,
                            symmetrization_samples=a.sym_samples, seed=a.seed, skip_constants=skip)
    _write_tails(run, rep)
    if rep.hill is not None:
        run.say(f"hill kappa = {rep.hill.kappa:.6g} (k = {rep.hill.k}), CI {rep.hill.ci[0]:.6g} .. {rep.hill.ci[1]:.6g}")
    return EXIT_OK


def cmd_report(run, model, model_hash):
    from . import tails
    from .structure import analyze_structure

    a = run.args
    sa = _analysis(run, model)
    write_json(run.path("analyze.json"), sa.to_dict())
    write_csv_rows(run.path("lambda.csv"), ("beta", "lambda"), sa.beta_grid)
    st = analyze_structure(model, degeneracy_tol=a.degeneracy_tol, lattice_tol=a.lattice_tol)
    write_json(run.path("check.json"), st.to_dict())
    eps = _resolve_eps(a.eps, lambda: sa.kappa)
    batch = _simulate(run, model, eps)
    rep = tails.tail_report(model, batch, spectral=sa, structure=st, t_grid=_parse_t_grid(a.t_grid),
                            hill_k=a.hill_k, symmetrization_samples=a.sym_samples, seed=a.seed,
                            skip_constants=st.degenerate)
    _write_tails(run, rep)
    summary = {
        "kappa": sa.kappa,
        "drift": sa.drift,
        "hill": None if rep.hill is None else rep.hill.to_dict(),
        "hill_contains_kappa": None if rep.hill is None else bool(rep.hill.ci[0] <= sa.kappa <= rep.hill.ci[1]),
        "condition_g": st.condition_g,
        "degenerate": st.degenerate,
        "arithmetic": st.arithmetic,
        "truncation": batch.truncation(),
        "eps_trunc": eps,
    }
    if st.degenerate:
        summary["constants"] = "skipped: degenerate model, all tail constants vanish"
    else:
        rows = []
        for p in rep.plateau:
            for sign in (1, -1):
                f, fse = rep.constants.K[sign][p.state], rep.constants.se[sign][p.state]
                comb = math.hypot(fse, p.se[sign])
                rows.append({
                    "state": p.state, "sign": sign, "formula": f, "formula_se": fse,
                    "plateau": p.K[sign], "plateau_se": p.se[sign],
                    "z": None if comb == 0 else (f - p.K[sign]) / comb,
                })
        summary["constants"] = {"branch": rep.constants.branch, "comparison": rows}
    write_json(run.path("summary.json"), summary)
    run.say(f"kappa = {sa.kappa:.12g}; degenerate = {st.degenerate}; condition G = {st.condition_g}")
    if rep.hill is not None:
        run.say(f"hill kappa = {rep.hill.kappa:.6g}, CI {rep.hill.ci[0]:.6g} .. {rep.hill.ci[1]:.6g}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "check": cmd_check,
    "simulate": cmd_simulate,
    "tails": cmd_tails,
    "report": cmd_report,
}


# ---------------------------------------------------------------- parser

def _eps_arg(text):
    return text if text == "auto" else float(text)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="model JSON file")
    common.add_argument("--out-dir", default=".", help="directory for outputs and manifest.json")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--kappa-tol", type=float, default=1e-10)
    common.add_argument("--spectral-tol", type=float, default=1e-12)
    common.add_argument("--beta-max", type=float, default=64.0)

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--n", type=int, default=100_000, help="samples per initial state")
    sim.add_argument("--eps", type=_eps_arg, default=1e-12, help='truncation level, or "auto" (eps^kappa <= 1e-4)')
    sim.add_argument("--min-terms", type=int, default=64)
    sim.add_argument("--max-terms", type=int, default=10_000)

    struct = argparse.ArgumentParser(add_help=False)
    struct.add_argument("--degeneracy-tol", type=float, default=1e-9)
    struct.add_argument("--lattice-tol", type=float, default=1e-9)

    tl = argparse.ArgumentParser(add_help=False)
    tl.add_argument("--t-grid", default=None, help='"lo:hi:points" (geometric) or comma list')
    tl.add_argument("--hill-k", type=int, default=None)
    tl.add_argument("--sym-samples", type=int, default=100_000,
                    help="fresh paths per state for the symmetrization check (0 to skip)")

    p = argparse.ArgumentParser(prog="mmtail", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"mmtail {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common])
    sub.add_parser("analyze", parents=[common])
    sub.add_parser("check", parents=[common, struct])
    s = sub.add_parser("simulate", parents=[common, sim])
    s.add_argument("--out", default=None, help="sample file (.csv, or .npy for the binary layout)")
    t = sub.add_parser("tails", parents=[common, tl])
    t.add_argument("--samples", required=True, help="sample file written by simulate")
    t.add_argument("--kappa", default="auto", help='tail index, or "auto" for the spectral value')
    sub.add_parser("report", parents=[common, sim, struct, tl])
    r = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    r.add_argument("manifest")
    r.add_argument("--out-dir", default=None, help="defaults to the manifest's directory")
    r.add_argument("--quiet", action="store_true")
    return p


def _args_from_manifest(path, out_dir, quiet):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    ns = argparse.Namespace(**doc["config"])
    ns.command = doc["command"]
    ns.out_dir = out_dir or str(Path(path).resolve().parent)
    ns.quiet = quiet
    return ns


def run(args) -> int:
    """Execute one command; returns the exit status."""
    if args.command == "replay":
        args = _args_from_manifest(args.manifest, args.out_dir, args.quiet)
    try:
        r = Run(args)
        model, model_hash = load_model(args.model)
        status = COMMANDS[args.command](r, model, model_hash)
        r.manifest(model_hash)
        return status
    except InvalidModel as exc:
        print(f"invalid model:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except AssumptionViolation as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except NumericalFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
