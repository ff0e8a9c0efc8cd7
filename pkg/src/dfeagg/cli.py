"""Command-line runner: ``dfeagg init | keygen | run | report``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
import time
from pathlib import Path

import yaml

from . import wire
from .baselines import (
    PPFL_BYTES_PER_PARAM,
    PPFL_MESSAGE_ROUNDS,
    PUBLISHED_PPFL_MB_37M,
    TimingComparison,
    compare_encryption_timing,
    paillier_keygen,
    ppfl_cost_model,
)
from .config import TEMPLATE, ConfigError, RunConfig, dump_config, load_config
from .errors import DFEError
from .groups import GroupParams, params_for_curve_id
from .metrics import MetricsSink, comm_overhead, to_mb, write_confusion_sidecar
from .protocol import KeyDistributionCenter
from .scheme import keygen_client, setup
from .simulation import KeyMaterial, RoundAbort, SimulationSpec, key_ceremony, run_both, simulate

log = logging.getLogger("dfeagg")

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 2, 3
REFERENCE_PARAM_COUNT = 37_196_556


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments already; keep that but route through UsageError
    def error(self, message):
        raise UsageError(message)


# -- config plumbing ---------------------------------------------------------

def _overrides(args) -> dict:
    ov = {}
    if getattr(args, "seed", None) is not None:
        ov["seed"] = args.seed
    if getattr(args, "toy_field", False):
        ov["crypto.toy_field"] = True
    simple = {"rounds": "training.rounds", "pipeline": "pipeline", "clients": "scenario.n_clients",
              "chunk_dim": "crypto.chunk_dim", "decrypt_path": "crypto.decrypt_path",
              "weighting": "protocol.weighting", "keys": "crypto.keys_dir"}
    for attr, dotted in simple.items():
        v = getattr(args, attr, None)
        if v is not None:
            ov[dotted] = v
    if getattr(args, "gamma", None) is not None:
        ov["protocol.gamma"] = None if args.gamma < 0 else args.gamma
    for item in getattr(args, "set", None) or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError([(item, "--set expects KEY=VALUE")])
        ov[key.strip()] = yaml.safe_load(raw)
    return ov


def _resolved(cfg: RunConfig) -> tuple[RunConfig, bool]:
    """Fill in a fresh seed when none was pinned; the second value says whether it was."""
    if cfg.seed is not None:
        return cfg, True
    return cfg.model_copy(update={"seed": secrets.randbits(32)}), False


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("-c", "--config", help="YAML run configuration (defaults if omitted)")
    p.add_argument("--seed", type=int, help="pin every random stream")
    p.add_argument("--toy-field", action="store_true", help="use the small transparent group (fast, insecure)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted config field")


# -- keys on disk --------------------------------------------------------------

def write_keys(out: Path, km: KeyMaterial) -> dict[str, str]:
    out.mkdir(parents=True, exist_ok=True)
    wire.write_secret_file(out / "master.key", wire.master_secret_to_bytes(km.kdc.master))
    wire.write_secret_file(out / "aggregator.key", wire.aggregation_key_to_bytes(km.aggregation_key))
    for cid, ck in km.client_keys.items():
        wire.write_secret_file(out / "clients" / f"{cid}.key", wire.client_key_to_bytes(ck))
    fps = km.fingerprints()
    (out / "fingerprints.json").write_text(json.dumps(fps, indent=1) + "\n", encoding="utf-8")
    return fps


def read_keys(keys_dir: Path, element_size_bytes: int = 56) -> KeyMaterial:
    ms = wire.master_secret_from_bytes((keys_dir / "master.key").read_bytes())
    params = params_for_curve_id(ms.curve_id, element_size_bytes)
    ak = wire.aggregation_key_from_bytes((keys_dir / "aggregator.key").read_bytes())
    cks = {}
    for f in sorted((keys_dir / "clients").glob("*.key")):
        ck = wire.client_key_from_bytes(f.read_bytes())
        cks[ck.client_id] = ck
    return KeyMaterial(params, KeyDistributionCenter(params, ms), cks, ak)


def _check_keys(km: KeyMaterial, spec: SimulationSpec):
    problems = []
    want = spec.group_params().curve_id
    if km.params.curve_id != want:
        problems.append(("crypto.keys_dir", f"keys were made for {km.params.curve_id}, config wants {want}"))
    if km.kdc.master.chunk_dim != spec.chunk_dim:
        problems.append(("crypto.chunk_dim", f"keys use n={km.kdc.master.chunk_dim}"))
    missing = sorted(set(spec.scenario.client_ids) - set(km.client_keys))
    if missing:
        problems.append(("scenario.n_clients", f"no key for {', '.join(missing)}"))
    if problems:
        raise ConfigError(problems)


# -- report --------------------------------------------------------------------

def overhead_table(param_count: int, element_size_bytes: int, wire_element_size: int, chunk_dim: int,
                   timing: dict | None = None, group: str = "") -> list[tuple[str, str]]:
    """Rows (label, value) of the DFE vs PPFL comparison."""
    nominal = comm_overhead(param_count, element_size_bytes, "nominal")
    measured = comm_overhead(param_count, wire_element_size, "measured", chunk_dim=chunk_dim)
    ppfl, msg_rounds = ppfl_cost_model(param_count)
    rows = [
        ("parameters", f"{param_count:,}"),
        ("DFE upload, nominal convention", f"{nominal:,} B = {to_mb(nominal):,.2f} MB"),
        ("DFE upload, measured wire size", f"{measured:,} B = {to_mb(measured):,.2f} MB"),
        (f"PPFL ({PPFL_MESSAGE_ROUNDS} x {PPFL_BYTES_PER_PARAM} B per param)",
         f"{ppfl:,} B = {to_mb(ppfl):,.2f} MB over {msg_rounds} message rounds"),
        ("byte ratio PPFL / DFE (nominal)", f"{ppfl / nominal:.2f}"),
        ("byte ratio PPFL / DFE (measured)", f"{ppfl / measured:.2f}"),
    ]
    if param_count == REFERENCE_PARAM_COUNT:
        rows.append(("PPFL figure as published", f"{PUBLISHED_PPFL_MB_37M:,.2f} MB "
                     f"(differs from the computed {to_mb(ppfl):,.2f} MB by "
                     f"{PUBLISHED_PPFL_MB_37M - to_mb(ppfl):,.2f} MB; computed value used)"))
    if timing:
        suffix = f" [{group}]" if group else ""
        rows += [
            (f"DFE encrypt, median per param{suffix}", f"{timing['dfe_median_s'] * 1e3:.4f} ms"),
            (f"Paillier-{timing['paillier_bits']} encrypt, median per param",
             f"{timing['paillier_median_s'] * 1e3:.4f} ms"),
            ("timing ratio Paillier / DFE", f"{timing['ratio']:.2f} (over {timing['n_params']} params)"),
        ]
    return rows


def format_table(rows: list[tuple[str, str]]) -> str:
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def measure_timing(params: GroupParams, chunk_dim: int, *, bits: int, n_params: int, seed) -> TimingComparison:
    km_seed = None if seed is None else f"{seed}:timing"
    _, ms = setup(chunk_dim=chunk_dim, rng_seed=km_seed, params=params)
    ck = keygen_client(ms, "timing-client")
    kp = paillier_keygen(bits, None if seed is None else f"{seed}:paillier")
    return compare_encryption_timing(params, ck, kp, n_params=n_params, seed=seed or 0)


# -- subcommands ---------------------------------------------------------------

def cmd_init(args) -> int:
    path = Path(args.path)
    if path.exists() and not args.force:
        print(f"{path} exists; pass --force to overwrite", file=sys.stderr)
        return EXIT_INVALID
    path.write_text(TEMPLATE, encoding="utf-8")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_keygen(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    spec = cfg.to_spec()
    spec.pin_keys = cfg.seed is not None
    out = Path(args.out)
    km = key_ceremony(spec, spec.scenario.client_ids)
    fps = write_keys(out, km)
    for name, fp in fps.items():
        print(f"{name:<16} {fp}")
    log.info("wrote %d client keys and 1 aggregation key to %s", len(km.client_keys), out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    cfg, pinned = _resolved(cfg)
    spec = cfg.to_spec()
    spec.pin_keys = pinned
    keys = None
    if cfg.pipeline != "plaintext" and cfg.crypto.keys_dir:
        keys_dir = Path(cfg.crypto.keys_dir)
        if not (keys_dir / "master.key").exists():
            raise ConfigError([("crypto.keys_dir", f"no master.key in {keys_dir}")])
        keys = read_keys(keys_dir, cfg.crypto.element_size_bytes)
        _check_keys(keys, spec)

    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ConfigError([("--out", f"{out} is not empty; pass --force to reuse it")])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    summary = {"status": "running", "pipeline": cfg.pipeline, "seed": cfg.seed, "seed_pinned": pinned}
    sink = MetricsSink(out / "metrics.csv", spec.scenario.n_classes)
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        if cfg.pipeline == "both":
            if keys is None:
                keys = key_ceremony(spec, spec.scenario.client_ids)
            result, plain = run_both(spec, keys=keys, on_row=sink.write)
            summary["plain_final_macro_accuracy"] = plain.final_macro_accuracy
            summary["max_trajectory_divergence"] = max(r.trajectory_divergence for r in result.rows)
        else:
            result = simulate(spec, encrypted=cfg.pipeline == "encrypted", keys=keys, on_row=sink.write)
        rows = result.rows
        summary.update(status="ok", final_macro_accuracy=result.final_macro_accuracy,
                       final_min_class_accuracy=rows[-1].min_class_accuracy,
                       participation_counts=result.frequencies)
        if cfg.pipeline != "plaintext":
            summary["all_rounds_within_tolerance"] = all(r.within_tolerance for r in rows)
        (out / "key_fingerprints.json").write_text(json.dumps(result.fingerprints, indent=1) + "\n",
                                                   encoding="utf-8")
        write_confusion_sidecar(out / "confusion.json", rows)
    except RoundAbort as exc:
        log.error("%s", exc)
        summary.update(status="aborted", aborted_round=exc.round_index, error=str(exc.cause))
        code = EXIT_ABORT
    except KeyboardInterrupt:
        log.error("interrupted; metrics flushed up to round %d", len(sink.rows))
        summary.update(status="interrupted", completed_rounds=len(sink.rows))
        code = EXIT_ABORT
    finally:
        sink.close()

    if code == EXIT_OK:
        params = keys.params if keys else spec.group_params()
        d = (spec.scenario.n_features + 1) * spec.scenario.n_classes
        report = {"param_count": d, "element_size_bytes": spec.element_size_bytes,
                  "wire_element_size": params.g2.wire_size, "chunk_dim": spec.chunk_dim,
                  "group": params.curve_id.split(":")[0], "timing": None}
        if cfg.baselines.paillier_timing:
            report["timing"] = measure_timing(params, spec.chunk_dim, bits=cfg.baselines.paillier_bits,
                                              n_params=cfg.baselines.timing_params, seed=cfg.seed).as_dict()
        summary["report"] = report
        print(format_table(_table_from_report(report)))
    summary["elapsed_seconds"] = time.perf_counter() - t0
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    print(f"run directory: {out} ({summary['status']})")
    return code


def _table_from_report(report: dict) -> list[tuple[str, str]]:
    return overhead_table(report["param_count"], report["element_size_bytes"], report["wire_element_size"],
                          report["chunk_dim"], report.get("timing"), report.get("group", ""))


def cmd_report(args) -> int:
    if args.run_dir:
        summary_path = Path(args.run_dir) / "summary.json"
        if not summary_path.exists():
            raise ConfigError([("run_dir", f"{summary_path} not found")])
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        if "report" not in summary:
            raise ConfigError([("run_dir", f"run did not complete (status {summary.get('status')})")])
        print(format_table(_table_from_report(summary["report"])))
        return EXIT_OK
    cfg = load_config(args.config, _overrides(args))
    spec = cfg.to_spec()
    params = spec.group_params()
    timing = None
    if not args.no_timing:
        timing = measure_timing(params, spec.chunk_dim, bits=cfg.baselines.paillier_bits,
                                n_params=cfg.baselines.timing_params, seed=cfg.seed).as_dict()
    rows = overhead_table(args.params, spec.element_size_bytes, params.g2.wire_size, spec.chunk_dim,
                          timing, params.curve_id.split(":")[0])
    print(format_table(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dfeagg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("init", help="write a commented config template")
    s.add_argument("path", nargs="?", default="dfeagg.yaml")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("keygen", help="run setup and all key generation, write key files")
    _add_common(s)
    s.add_argument("--clients", type=int, help="number of clients K")
    s.add_argument("--chunk-dim", type=int, help="matrix dimension n")
    s.add_argument("-o", "--out", default="keys")
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("run", help="simulate T rounds and write a run directory")
    _add_common(s)
    s.add_argument("-o", "--out", default="run")
    s.add_argument("--force", action="store_true", help="reuse a non-empty run directory")
    s.add_argument("--rounds", type=int)
    s.add_argument("--clients", type=int)
    s.add_argument("--chunk-dim", type=int)
    s.add_argument("--pipeline", choices=["encrypted", "plaintext", "both"])
    s.add_argument("--gamma", type=int, help="staleness bound; negative means none")
    s.add_argument("--weighting", choices=["balanced", "size"])
    s.add_argument("--decrypt-path", choices=["pairing", "fast"])
    s.add_argument("--keys", help="key directory from `keygen` (default: inline ceremony)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="communication and timing comparison table")
    _add_common(s)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("run_dir", nargs="?", help="completed run directory")
    g.add_argument("--params", type=int, help="parameter count |w|")
    s.add_argument("--chunk-dim", type=int)
    s.add_argument("--no-timing", action="store_true", help="skip the encryption timing rows")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dfeagg: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "params", None) is not None and args.params < 1:
            raise ConfigError([("--params", "must be >= 1")])
        return args.func(args)
    except ConfigError as exc:
        print(f"dfeagg: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DFEError, OSError) as exc:
        print(f"dfeagg: aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
