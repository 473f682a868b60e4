"""Command-line front end: synthetic data, statistics, codes, enrollment, verification, evaluation.

Every subcommand reads one TOML/JSON configuration file and writes only
inside the output directory it is given.  ``verify`` exits 0 on accept,
1 on reject and 2 on error; all other commands exit 0 or 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import traceback
from importlib import resources
from pathlib import Path

from . import com, pipeline, polar
from . import eval as metrics
from .config import CONFIG_KEYS, RunConfig, load_config, tomllib
from .errors import ConfigurationError, HDSError, ParameterError
from .minutiae import SyntheticDatabase, generate_database, read_minutia_file, write_minutia_file
from .protocol import (PairingProtocol, analog_scores, build_corpus, hard_scores, zlhds_scores,
                       zlhds_strings)
from .spectral import spectral, write_spectral_csv
from .zlhds import ChannelStats

log = logging.getLogger("spectral_hds")

BUNDLED = {"smoke": "smoke.toml"}
ROC_NOTE = ("binarized domains sweep a threshold on the Hamming distance, assuming a code exists "
            "that enforces each threshold")


def _config(arg: str) -> RunConfig:
    if arg in BUNDLED:
        text = resources.files("spectral_hds").joinpath("configs").joinpath(BUNDLED[arg]).read_text(encoding="utf-8")
        return RunConfig.from_dict(tomllib.loads(text))
    return load_config(arg)


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _out(outdir: Path, name: str) -> Path:
    """A file directly inside ``outdir``; names never carry path components."""
    safe = re.sub(r"[^A-Za-z0-9._+-]", "_", name).lstrip(".") or "_"
    return outdir / safe


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _seed(args, cfg: RunConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def _database(path) -> SyntheticDatabase:
    return SyntheticDatabase.from_sets(read_minutia_file(path))


def _load_stats(path) -> ChannelStats:
    return ChannelStats.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _scheme(cfg: RunConfig, stats: ChannelStats, code: polar.PolarCode) -> pipeline.Scheme:
    grid = cfg.spectral_grid()
    if stats.grid is not None and stats.grid != grid:
        raise ConfigurationError("statistics file was estimated on a different grid than the config")
    if tuple(stats.kinds) != cfg.enrollment_policy().kinds:
        raise ConfigurationError(f"statistics cover {stats.kinds}, config asks for {cfg.enrollment_policy().kinds}")
    selection = pipeline.select_reliable(stats, cfg.retained_count)
    return pipeline.Scheme(grid, stats, selection, code, cfg.quantizer())


# --- building blocks shared by subcommands and run_experiment -----------------

def generate(cfg: RunConfig, seed: int) -> SyntheticDatabase:
    c = cfg.corpus
    return generate_database(c.n_fingers, c.n_images, cfg.noise_model(), c.z_mean,
                             c.field_width, c.field_height, seed)


def estimate(cfg: RunConfig, db: SyntheticDatabase) -> ChannelStats:
    return build_corpus(db, cfg.spectral_grid(), cfg.enrollment_policy().kinds).stats()


def design(cfg: RunConfig, stats: ChannelStats) -> list[polar.PolarCode]:
    selection = pipeline.select_reliable(stats, cfg.retained_count)
    return [pipeline.design_code(stats, selection, m, cfg.policy.t) for m in cfg.code.m]


def evaluate(cfg: RunConfig, db: SyntheticDatabase, outdir: Path, seed: int, threads: int = 1,
             stats: ChannelStats | None = None) -> dict:
    """Write ``roc.csv``, ``summary.json`` and ``codes.csv``; return the summary."""
    policy = cfg.enrollment_policy()
    corpus = build_corpus(db, cfg.spectral_grid(), policy.kinds)
    stats = stats if stats is not None else corpus.stats()
    selection = pipeline.select_reliable(stats, cfg.retained_count)
    quant = cfg.quantizer()
    ordered = PairingProtocol(policy, True, cfg.evaluate.impostors, seed)
    unordered = PairingProtocol(policy, False, cfg.evaluate.impostors, seed)
    domains = {
        "analog": analog_scores(corpus, unordered, threads),
        "hard": hard_scores(corpus, unordered, threads=threads),
        "zlhds": zlhds_scores(corpus, ordered, stats, None, quant, threads),
        "zlhds_reliable": zlhds_scores(corpus, ordered, stats, selection, quant, threads),
    }
    per_domain = {}
    for name, scores in domains.items():
        curve = scores.roc()
        assert curve.check_monotone()
        binary = name != "analog"
        per_domain[name] = {
            "eer": curve.eer,
            "genuine_ber": scores.genuine_ber if binary else None,
            "impostor_ber": scores.impostor_ber if binary else None,
            "genuine": int(scores.genuine.size),
            "impostor": int(scores.impostor.size),
        }
    chosen = domains[cfg.evaluate.domain]
    chosen.roc().to_csv(_out(outdir, "roc.csv"))

    points = []
    if cfg.code.m or cfg.code.codebook_ell:
        strings = zlhds_strings(corpus, ordered, stats, selection, quant, threads)
        codes = [pipeline.design_code(stats, selection, m, policy.t) for m in cfg.code.m]
        points += metrics.code_operating_points(codes, strings)
        books = [com.RandomCodebook.random(ell, 4, cfg.code.n // 4, seed=seed + ell) for ell in cfg.code.codebook_ell]
        points += metrics.codebook_operating_points(books, strings, seed)
    metrics.write_codes_csv(points, _out(outdir, "codes.csv"))

    d = per_domain[cfg.evaluate.domain]
    summary = {
        "domain": cfg.evaluate.domain,
        "eer": d["eer"],
        "genuine_ber": d["genuine_ber"],
        "impostor_ber": d["impostor_ber"],
        "counts": {"fingers": corpus.n_fingers, "images": corpus.n_images,
                   "genuine": d["genuine"], "impostor": d["impostor"]},
        "domains": per_domain,
        "codes": [{"n": p.n, "m": p.m, "far": p.far, "frr": p.frr} for p in points],
        "note": ROC_NOTE,
        "config": cfg.to_dict(),
        "seed": seed,
    }
    _write_json(_out(outdir, "summary.json"), summary)
    return summary


def run_experiment(cfg: RunConfig, outdir, seed: int | None = None, threads: int = 1) -> Path:
    """Full flow into ``outdir``: corpus, statistics, codes, one helper record per finger, evaluation."""
    outdir = _outdir(outdir)
    seed = cfg.seed if seed is None else seed
    db = generate(cfg, seed)
    write_minutia_file(db.all_sets(), _out(outdir, "minutiae.txt"))
    stats = estimate(cfg, db)
    _write_json(_out(outdir, "stats.json"), stats.to_dict())
    codes = design(cfg, stats)
    selection = pipeline.select_reliable(stats, cfg.retained_count)
    _write_json(_out(outdir, "selection.json"), {"retained": selection.retained.tolist()})
    for code in codes:
        code.save(_out(outdir, f"code_m{code.m}.json"))
    if codes:
        scheme = _scheme(cfg, stats, max(codes, key=lambda c: c.m))
        policy = cfg.enrollment_policy()
        records = _outdir(outdir / "records")
        for images in db.fingers:
            record = pipeline.enroll(images[:policy.t], policy, scheme)
            record.save(_out(records, f"{images[0].finger_id}.json"))
    evaluate(cfg, db, outdir, seed, threads, stats)
    log.info("experiment written to %s", outdir)
    return outdir


# --- subcommands ----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = _config(args.config)
    db = generate(cfg, _seed(args, cfg))
    write_minutia_file(db.all_sets(), _out(_outdir(args.outdir), "minutiae.txt"))
    return 0


def cmd_transform(args) -> int:
    cfg = _config(args.config)
    outdir = _outdir(args.outdir)
    grid = cfg.spectral_grid()
    for i, mset in enumerate(read_minutia_file(args.minutiae)):
        maps = [spectral(mset, grid, k) for k in cfg.enrollment_policy().kinds]
        write_spectral_csv(maps, _out(outdir, f"{i:04d}_{mset.finger_id}_{mset.image_id}.csv"))
    return 0


def cmd_stats(args) -> int:
    cfg = _config(args.config)
    stats = estimate(cfg, _database(args.minutiae))
    _write_json(_out(_outdir(args.outdir), "stats.json"), stats.to_dict())
    return 0


def cmd_design_code(args) -> int:
    cfg = _config(args.config)
    stats = _load_stats(args.stats)
    outdir = _outdir(args.outdir)
    for code in design(cfg, stats):
        _scheme(cfg, stats, code)  # grid and kind consistency
        code.save(_out(outdir, f"code_m{code.m}.json"))
    return 0


def _images_of(db: SyntheticDatabase, finger: str | None):
    if finger is None:
        return db.fingers[0]
    for imgs in db.fingers:
        if imgs[0].finger_id == finger:
            return imgs
    raise ParameterError(f"finger {finger!r} not in file")


def cmd_enroll(args) -> int:
    cfg = _config(args.config)
    scheme = _scheme(cfg, _load_stats(args.stats), polar.PolarCode.load(args.code))
    policy = cfg.enrollment_policy()
    images = _images_of(_database(args.minutiae), args.finger)
    if len(images) < policy.t:
        raise ParameterError(f"finger has {len(images)} images, policy needs {policy.t}")
    record = pipeline.enroll(images[:policy.t], policy, scheme)
    record.save(_out(_outdir(args.outdir), f"record_{images[0].finger_id}.json"))
    return 0


def cmd_verify(args) -> int:
    cfg = _config(args.config)
    scheme = _scheme(cfg, _load_stats(args.stats), polar.PolarCode.load(args.code))
    record = com.HelperRecord.load(args.record)
    sets = read_minutia_file(args.minutiae)
    chosen = [s for s in sets if (args.finger is None or s.finger_id == args.finger)
              and (args.image is None or s.image_id == args.image)]
    if not chosen:
        raise ParameterError("no minutia record matches --finger/--image")
    accepted = pipeline.verify(chosen[0], record, scheme)
    print("accept" if accepted else "reject")
    return 0 if accepted else 1


def cmd_evaluate(args) -> int:
    cfg = _config(args.config)
    stats = _load_stats(args.stats) if args.stats else None
    summary = evaluate(cfg, _database(args.minutiae), _outdir(args.outdir), _seed(args, cfg),
                       args.threads, stats)
    print(f"{summary['domain']}: EER {summary['eer']:.4f}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args.config)
    out = run_experiment(cfg, args.outdir, _seed(args, cfg), args.threads)
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for pair evaluation (results do not depend on it)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spectral-hds", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog=CONFIG_KEYS)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, *positionals, finger=False, image=False):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                           epilog=CONFIG_KEYS, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("config", help="TOML/JSON config file, or 'smoke' for the bundled one")
        for pos, h in positionals:
            p.add_argument(pos, help=h)
        if finger:
            p.add_argument("--finger", default=None, help="finger id (default: first in file)")
        if image:
            p.add_argument("--image", default=None, help="image id (default: first of the finger)")
        p.set_defaults(func=fn)
        return p

    add("gen-data", cmd_gen_data, "write a synthetic corpus to OUTDIR/minutiae.txt",
        ("outdir", "output directory"))
    add("transform", cmd_transform, "dump raw spectral maps as CSV (kind,q,R,re,im), one file per image",
        ("minutiae", "minutia file"), ("outdir", "output directory"))
    add("stats", cmd_stats, "estimate per-component statistics into OUTDIR/stats.json",
        ("minutiae", "minutia file"), ("outdir", "output directory"))
    add("design-code", cmd_design_code, "construct one polar code per configured m",
        ("stats", "stats.json"), ("outdir", "output directory"))
    add("enroll", cmd_enroll, "enroll the first t images of a finger into OUTDIR/record_<finger>.json",
        ("stats", "stats.json"), ("code", "code descriptor"), ("minutiae", "minutia file"),
        ("outdir", "output directory"), finger=True)
    add("verify", cmd_verify, "verify one image against a helper record (exit 0 accept, 1 reject, 2 error)",
        ("stats", "stats.json"), ("code", "code descriptor"), ("record", "helper record"),
        ("minutiae", "minutia file"), finger=True, image=True)
    ev = add("evaluate", cmd_evaluate, "ROC, EER, BER and code operating points of a corpus",
             ("minutiae", "minutia file"), ("outdir", "output directory"))
    ev.add_argument("--stats", default=None, help="use these statistics instead of estimating them")
    add("run", cmd_run, "full experiment: data, stats, codes, records, evaluation",
        ("outdir", "output directory"))
    return parser


def _origin(exc: BaseException) -> str:
    frames = traceback.extract_tb(exc.__traceback__)
    for frame in reversed(frames):
        parts = Path(frame.filename).parts
        if "spectral_hds" in parts:
            return Path(frame.filename).stem
    return "cli"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error [cli]: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit code 2
        print(f"error [{_origin(exc)}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
