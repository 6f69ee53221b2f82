"""Command-line entry point: ``stancegraph <subcommand> ...``.

Every subcommand resolves its settings from built-in defaults, then an
optional ``--config`` JSON file, then explicit flags (flags win). Each run
writes a manifest next to its output recording the resolved settings, input
and output sha256 digests, the seed, the package version and the wall time.
``stancegraph replay MANIFEST`` re-runs a manifest and compares digests.

Exit codes: 0 ok, 2 bad configuration, 3 bad input data, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import re
import sys
import time
from dataclasses import fields
from pathlib import Path

from . import __version__
from .graph import (GraphError, StanceAssignment, StanceNames, build_bipartite, read_label_file,
                    read_posts, read_seed_file)
from .metrics import EvaluationError, results_table, score
from .propagation import PropagationConfig, PropagationError, load_seed_set, run_propagation

logger = logging.getLogger("stancegraph")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
MANIFEST_NAME = "manifest.json"
PROPAGATION_KEYS = ("max_iter", "k", "tie_policy", "stdev", "high_score_stance")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _is_data_error(exc: BaseException) -> bool:
    from .nn.training import DivergenceError, TrainingError

    if isinstance(exc, DivergenceError):
        return False
    return isinstance(exc, (GraphError, PropagationError, EvaluationError, TrainingError, DataError))


# ---------------------------------------------------------------------------
# run bookkeeping
# ---------------------------------------------------------------------------


class Run:
    """Tracks inputs and outputs of one subcommand and removes partial outputs on failure."""

    def __init__(self, command: str, cfg: dict, out: Path, out_is_dir: bool):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.out_is_dir = out_is_dir
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []
        self._made_dirs: list[Path] = []

    @property
    def manifest_path(self) -> Path:
        return self.out / MANIFEST_NAME if self.out_is_dir else Path(f"{self.out}.manifest.json")

    @contextlib.contextmanager
    def phase(self, kind: str):
        """Re-raise failures inside the block as config (``"config"``) or data (``"data"``) errors."""
        try:
            yield
        except (ConfigError, DataError):
            raise
        except (ValueError, TypeError, KeyError, OSError, UnicodeDecodeError) as exc:
            err = ConfigError if kind == "config" else DataError
            raise err(str(exc) or type(exc).__name__) from exc

    def input(self, path) -> Path:
        p = Path(path)
        if not p.exists():
            raise DataError(f"input not found: {p}")
        if p.is_dir():
            for f in sorted(x for x in p.rglob("*") if x.is_file()):
                self.inputs[str(f.resolve())] = sha256_file(f)
        else:
            self.inputs[str(p.resolve())] = sha256_file(p)
        return p

    def mkdir(self, path: Path) -> Path:
        missing = []
        p = path
        while not p.exists():
            missing.append(p)
            p = p.parent
        path.mkdir(parents=True, exist_ok=True)
        self._made_dirs.extend(reversed(missing))
        return path

    def output(self, path) -> Path:
        p = Path(path)
        self.mkdir(p.parent)
        self.outputs.append(p)
        return p

    def cleanup(self) -> None:
        for p in self.outputs + [self.manifest_path]:
            with contextlib.suppress(OSError):
                p.unlink()
        for d in reversed(self._made_dirs):
            with contextlib.suppress(OSError):
                d.rmdir()

    def output_digests(self) -> dict[str, str]:
        base = self.manifest_path.parent
        out = {}
        for p in self.outputs:
            if p.exists():
                out[str(p.resolve().relative_to(base.resolve()))] = sha256_file(p)
        return dict(sorted(out.items()))

    def write_manifest(self, wall_time: float) -> dict:
        m = {"subcommand": self.command, "config": self.cfg, "inputs": dict(sorted(self.inputs.items())),
             "outputs": self.output_digests(), "seed": self.cfg.get("seed"), "version": __version__,
             "wall_time_s": round(wall_time, 3)}
        self.manifest_path.parent.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(json.dumps(m, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return m


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _stances(cfg) -> StanceNames:
    names = cfg.get("stances") or ["S1", "S2"]
    if isinstance(names, str):
        names = names.split(",")
    if len(names) != 2:
        raise ConfigError("stances needs exactly two names")
    try:
        return StanceNames(*names)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _train_config(cfg):
    from .nn.training import TrainConfig

    keys = {f.name for f in fields(TrainConfig)}
    d = {k: cfg[k] for k in keys if k in cfg}
    if d.get("model") == "random":
        d["model"] = "sage"
    return TrainConfig.from_dict(d)


def _propagation_config(cfg, seeds_s1, seeds_s2, stances) -> PropagationConfig:
    return PropagationConfig(seeds_s1, seeds_s2, stances=stances,
                             **{k: cfg[k] for k in PROPAGATION_KEYS if k in cfg})


def _load_interaction_graph(run: Run, cfg):
    from .ingest import ingest, load_interaction_graph, read_tweets

    if cfg.get("graph"):
        return load_interaction_graph(run.input(cfg["graph"]))
    if cfg.get("tweets"):
        return ingest(read_tweets(run.input(cfg["tweets"])), cfg.get("dim"))
    raise ConfigError("need --graph (an ingest output directory) or --tweets")


def _infer_stances(cfg, *label_maps) -> StanceNames:
    if cfg.get("stances"):
        return _stances(cfg)
    seen = []
    for m in label_maps:
        for v in m.values():
            if v != "undetermined" and v not in seen:
                seen.append(v)
    if set(seen) <= {"S1", "S2"}:
        return StanceNames()
    if len(seen) != 2:
        raise DataError(f"cannot infer two stance names from labels {sorted(seen)}; pass --stances")
    return StanceNames(*sorted(seen))


def parse_assignments(items) -> dict:
    """``["a=1,b=[2,3]", "c=x"]`` -> ``{"a": 1, "b": [2, 3], "c": "x"}``; values parsed as JSON when possible."""
    if isinstance(items, dict):
        return dict(items)
    if isinstance(items, str):
        items = [items]
    out = {}
    for item in items or []:
        for part in re.split(r",(?![^\[]*\])", item):
            if not part.strip():
                continue
            if "=" not in part:
                raise ConfigError(f"expected key=value, got {part!r}")
            key, value = part.split("=", 1)
            try:
                out[key.strip()] = json.loads(value)
            except json.JSONDecodeError:
                out[key.strip()] = value
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_build_graph(run: Run, cfg):
    from .snapshot import save_snapshot

    with run.phase("data"):
        g = build_bipartite(read_posts(run.input(cfg["posts"])))
    save_snapshot(g, run.output(run.out))
    print(f"bipartite graph: {g.n_users} users, {g.n_hashtags} hashtags, {g.n_edges} edges")


def _bipartite(run: Run, cfg):
    from .snapshot import load_snapshot

    with run.phase("data"):
        if cfg.get("graph"):
            return load_snapshot(run.input(cfg["graph"]))
        if cfg.get("posts"):
            return build_bipartite(read_posts(run.input(cfg["posts"])))
    raise ConfigError("need --graph (a snapshot) or --posts")


def _seeds(run: Run, cfg):
    if cfg.get("topic"):
        with run.phase("config"):
            return load_seed_set(cfg["topic"])
    if not (cfg.get("seeds_s1") and cfg.get("seeds_s2")):
        raise ConfigError("need --topic or both --seeds-s1 and --seeds-s2")
    with run.phase("data"):
        return read_seed_file(run.input(cfg["seeds_s1"])), read_seed_file(run.input(cfg["seeds_s2"])), \
            _stances(cfg)


def cmd_propagate(run: Run, cfg):
    s1, s2, stances = _seeds(run, cfg)
    if cfg.get("stances"):
        stances = _stances(cfg)
    with run.phase("config"):
        pcfg = _propagation_config(cfg, s1, s2, stances)
    g = _bipartite(run, cfg)
    res = run_propagation(g, pcfg)
    out = run.mkdir(run.out)
    res.users.write_tsv(run.output(out / "users.tsv"))
    res.hashtags.write_tsv(run.output(out / "hashtags.tsv"))
    summary = {"summary": res.summary(), "propagation": pcfg.to_dict()}
    run.output(out / "propagation.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                                    encoding="utf-8")
    print(json.dumps(res.summary(), sort_keys=True))


def cmd_ingest(run: Run, cfg):
    from .ingest import GRAPH_FILES, ingest, read_tweets, save_interaction_graph

    with run.phase("data"):
        g = ingest(read_tweets(run.input(cfg["tweets"])), cfg.get("dim"))
    out = run.mkdir(run.out)
    for name in GRAPH_FILES:
        run.output(out / name)
    save_interaction_graph(g, out)
    print(f"interaction graph: {g.n_nodes} users, {g.n_edges} edges, dim {g.dim}")


def cmd_train(run: Run, cfg):
    from .nn.model import save_model
    from .nn.training import fit_model

    with run.phase("config"):
        tcfg = _train_config(cfg)
    with run.phase("data"):
        graph = _load_interaction_graph(run, cfg)
        raw = read_label_file(run.input(cfg["labels"]))
        stances = _infer_stances(cfg, raw)
        known = {u: v for u, v in raw.items() if v != "undetermined" and u in graph.users}
        if len(known) < len(raw):
            logger.warning("%d label(s) are undetermined or name users outside the graph", len(raw) - len(known))
        y = StanceAssignment.from_mapping(graph.users, known, stances=stances).labels
    res = fit_model(graph.features, y, tcfg, graph if tcfg.model != "mlp" else None, stances)
    out = run.mkdir(run.out)
    save_model(res.model, run.output(out / "model.sgm"))
    hist = {"best_epoch": res.best_epoch, "stopped_early": res.stopped_early, "history": res.history,
            "train": tcfg.to_dict()}
    run.output(out / "history.json").write_text(json.dumps(hist, indent=2, sort_keys=True) + "\n",
                                                encoding="utf-8")
    best = res.history[res.best_epoch]
    print(f"best epoch {res.best_epoch}: val loss {best['val_loss']:.4f}, val F1 {best['val_f1']:.4f}")


def cmd_predict(run: Run, cfg):
    from .nn.model import CheckpointError, load_model
    from .nn.training import predict

    with run.phase("data"):
        try:
            model = load_model(run.input(cfg["model_file"]))
        except CheckpointError as exc:
            raise DataError(str(exc)) from exc
        graph = _load_interaction_graph(run, cfg)
    pred = predict(model, graph)
    pred.assignment.write_tsv(run.output(run.out))
    c1, c2 = pred.assignment.counts()
    print(f"predicted {model.stances.s1}={c1} {model.stances.s2}={c2}")


def cmd_evaluate(run: Run, cfg):
    with run.phase("data"):
        pred = read_label_file(run.input(cfg["pred"]))
        truth = read_label_file(run.input(cfg["truth"]))
        stances = _infer_stances(cfg, truth, pred)
    report = score(pred, truth, stances)
    run.output(run.out).write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.summary())


def cmd_synth(run: Run, cfg):
    from .synth import generate, preset

    with run.phase("config"):
        sc = preset(cfg["preset"], **{**cfg.get("overrides", {}),
                                      **({"seed": cfg["seed"]} if cfg.get("seed") is not None else {})})
    ds = generate(sc)
    out = run.mkdir(run.out)
    for name in ("posts.tsv", "tweets.jsonl", "truth.tsv", "seeds_s1.txt", "seeds_s2.txt", "synth.json"):
        run.output(out / name)
    ds.write(out)
    print(f"synthetic dataset: {sc.n_users} users, {len(ds.posts)} posts, {len(ds.records)} tweets")


def cmd_annotate(run: Run, cfg):
    from .annotate import AnnotationConfigError, EndpointConfig, annotate_batch, read_requests

    with run.phase("config"):
        ep = EndpointConfig(url=cfg["url"], model=cfg["model_name"], temperature=cfg["temperature"],
                            timeout=cfg["timeout"], attempts=cfg["attempts"], backoff=cfg["backoff"])
    with run.phase("data"):
        try:
            reqs = read_requests(run.input(cfg["requests"]), cfg.get("topic"))
        except AnnotationConfigError as exc:
            raise DataError(str(exc)) from exc
    journal = Path(cfg.get("journal") or f"{run.out}.journal.jsonl")
    run.mkdir(journal.parent)
    report = annotate_batch(reqs, ep, out=run.output(run.out), journal=journal, rate=cfg.get("rate"),
                            parallel=cfg["parallel"])
    if report.failures:
        fpath = run.output(Path(f"{run.out}.failures.tsv"))
        fpath.write_text("".join(f"{f.user_id}\t{f.error}\n" for f in report.failures), encoding="utf-8")
    print(json.dumps(report.to_dict(), sort_keys=True))
    if report.failures:
        # keep what was annotated; the journal lets a rerun pick up the rest
        raise PartialFailure(f"{len(report.failures)} user(s) failed: {', '.join(report.failed_ids)}")


class PartialFailure(Exception):
    pass


def cmd_pipeline(run: Run, cfg):
    from .experiment import Dataset, run_experiment
    from .synth import generate, preset

    with run.phase("config"):
        tcfg = _train_config(cfg)
        synth = parse_assignments(cfg.get("synth")) if cfg.get("synth") else None
        if synth is None and not cfg.get("data"):
            raise ConfigError("need --synth or --data")
        if synth is not None and cfg.get("data"):
            raise ConfigError("--synth and --data are mutually exclusive")
        if cfg["model"] not in ("sage", "gat", "mlp", "random"):
            raise ConfigError(f"unknown model {cfg['model']!r}")
        prop = {k: cfg[k] for k in PROPAGATION_KEYS if k in cfg}
        if synth is not None:
            sc = preset(synth.pop("preset", "default"), **synth)
    if synth is not None:
        ds = generate(sc)
        dataset = Dataset.from_synth(ds)
        truth = ds.truth
    else:
        with run.phase("data"):
            run.input(cfg["data"])
            dataset = Dataset.from_dir(cfg["data"], _stances(cfg) if cfg.get("stances") else None)
            if cfg.get("truth"):
                dataset.truth = read_label_file(run.input(cfg["truth"]))
            truth = dataset.truth
            if truth is None:
                raise DataError("no truth labels: add truth.tsv to the data directory or pass --truth")
    res = run_experiment(dataset, cfg["model"], tcfg, cfg["trials"], cfg["seed"], truth, prop)

    out = run.mkdir(run.out)
    report = {"model": cfg["model"], "trials": cfg["trials"], "base_seed": cfg["seed"],
              "stage1": res.stage1.summary(), "stage1_accuracy": res.stage1_accuracy(truth),
              "evaluation": res.report.to_dict()}
    run.output(out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                               encoding="utf-8")
    run.output(out / "report.tsv").write_text(results_table({cfg["model"]: {"truth": res.report}}),
                                              encoding="utf-8")
    res.stage1.users.write_tsv(run.output(out / "stage1_users.tsv"))
    res.stage1.hashtags.write_tsv(run.output(out / "stage1_hashtags.tsv"))
    if res.predictions:
        res.predictions[0].write_tsv(run.output(out / "predictions.tsv"))
    print(f"{cfg['model']}: {res.report.summary()}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class Spec:
    """One subcommand: its handler, defaults, and whether ``--out`` names a directory."""

    def __init__(self, name, handler, help, out_is_dir, default_out, extra_keys=(), required=()):
        self.name, self.handler, self.help = name, handler, help
        self.out_is_dir, self.default_out = out_is_dir, default_out
        self.defaults: dict = {"out": default_out}
        self.extra_keys = set(extra_keys)
        self.required = tuple(required)

    def keys(self) -> set:
        return set(self.defaults) | self.extra_keys


def _opt(spec: Spec, p: argparse.ArgumentParser, *flags, default=None, **kw):
    action = p.add_argument(*flags, default=argparse.SUPPRESS, **kw)
    spec.defaults[action.dest] = default
    if default is not None and "help" in kw:
        action.help = f"{kw['help']} (default: {default})"
    return action


def _train_options(spec: Spec, p):
    from .nn.training import TrainConfig

    d = TrainConfig()
    spec.extra_keys |= {f.name for f in fields(TrainConfig)}
    _opt(spec, p, "--epochs", type=int, default=d.epochs, help="training epochs")
    _opt(spec, p, "--lr", type=float, default=d.lr, help="learning rate")
    _opt(spec, p, "--hidden", type=int, default=d.hidden, help="hidden width")
    _opt(spec, p, "--n-layers", type=int, default=d.n_layers, help="number of layers")
    _opt(spec, p, "--patience", type=int, default=d.patience, help="early-stopping patience")
    _opt(spec, p, "--optimizer", choices=("adam", "sgd"), default=d.optimizer, help="optimizer")
    _opt(spec, p, "--sentiment-weighted-mean", action="store_true", default=False,
         help="weight neighbors by |sentiment| when aggregating")


def _propagation_options(spec: Spec, p):
    _opt(spec, p, "--max-iter", type=int, default=50, help="propagation iteration cap")
    _opt(spec, p, "--k", type=float, default=1.0, help="threshold width in standard deviations")
    _opt(spec, p, "--tie-policy", choices=("skip", "S1", "S2"), default="skip",
         help="label for users with equal stance weight")
    _opt(spec, p, "--stdev", choices=("population", "sample"), default="population",
         help="standard deviation estimator")
    _opt(spec, p, "--high-score-stance", choices=("S1", "S2"), default="S2",
         help="stance given to hashtags scoring above the upper threshold")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, Spec]]:
    ap = argparse.ArgumentParser(prog="stancegraph", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    specs: dict[str, Spec] = {}

    def add(name, handler, help, out_is_dir, default_out, **kw):
        spec = Spec(name, handler, help, out_is_dir, default_out, **kw)
        p = sub.add_parser(name, help=help, description=help)
        p.add_argument("--config", help="JSON file of settings; explicit flags override it")
        _opt(spec, p, "--out", default=default_out,
             help="output directory" if out_is_dir else "output file")
        specs[name] = spec
        return spec, p

    s, p = add("build-graph", cmd_build_graph, "build the user-hashtag graph snapshot from posts", False,
               "graph.sgr", required=("posts",))
    _opt(s, p, "--posts", help="posts TSV: user<TAB>#tag1,#tag2,...")

    s, p = add("propagate", cmd_propagate, "stage 1: propagate stance labels from seed hashtags", True,
               "propagation")
    _opt(s, p, "--graph", help="graph snapshot from build-graph")
    _opt(s, p, "--posts", help="posts TSV (instead of --graph)")
    _opt(s, p, "--seeds-s1", help="seed hashtags for stance 1, one per line")
    _opt(s, p, "--seeds-s2", help="seed hashtags for stance 2, one per line")
    _opt(s, p, "--topic", choices=("climate", "gun"), help="use the bundled seed set for a topic")
    _opt(s, p, "--stances", help="display names for the two stances, comma separated")
    _propagation_options(s, p)

    s, p = add("ingest", cmd_ingest, "pool tweet embeddings into the attributed interaction graph", True,
               "interactions", required=("tweets",))
    _opt(s, p, "--tweets", help="tweet records (JSON lines or packed binary)")
    _opt(s, p, "--dim", type=int, help="embedding width (default: from the first record)")

    s, p = add("train", cmd_train, "stage 2: train a classifier on stage-1 labels", True, "model",
               required=("labels",))
    _opt(s, p, "--graph", help="ingest output directory")
    _opt(s, p, "--tweets", help="tweet records (instead of --graph)")
    _opt(s, p, "--labels", help="user label file, e.g. users.tsv from propagate")
    _opt(s, p, "--stances", help="display names for the two stances, comma separated")
    _opt(s, p, "--model", choices=("sage", "gat", "mlp"), default="sage", help="model family")
    _opt(s, p, "--seed", type=int, default=0, help="split and initialization seed")
    _train_options(s, p)

    s, p = add("predict", cmd_predict, "predict every user's stance with a trained model", False,
               "predictions.tsv", required=("model_file",))
    _opt(s, p, "--model-file", help="checkpoint written by train")
    _opt(s, p, "--graph", help="ingest output directory")
    _opt(s, p, "--tweets", help="tweet records (instead of --graph)")

    s, p = add("evaluate", cmd_evaluate, "score predicted labels against truth labels", False,
               "report.json", required=("pred", "truth"))
    _opt(s, p, "--pred", help="predicted label file")
    _opt(s, p, "--truth", help="truth label file")
    _opt(s, p, "--stances", help="stance names, comma separated (default: inferred)")

    s, p = add("synth", cmd_synth, "generate a synthetic dataset with planted stances", True, "synth")
    _opt(s, p, "--preset", default="default", help="generator preset")
    _opt(s, p, "--set", dest="overrides", action="append", help="generator option key=value (repeatable)")
    _opt(s, p, "--seed", type=int, help="generator seed")

    s, p = add("annotate", cmd_annotate, "zero-shot per-tweet annotation via a chat-completion service",
               False, "annotations.tsv", required=("requests",))
    _opt(s, p, "--requests", help="JSON lines with user_id and tweets")
    _opt(s, p, "--topic", choices=("gun_control", "climate_change"), help="topic (default: per request)")
    _opt(s, p, "--url", default="http://127.0.0.1:8000/v1/chat/completions", help="endpoint URL")
    _opt(s, p, "--model-name", default="gpt-4", help="model name sent to the endpoint")
    _opt(s, p, "--temperature", type=float, default=0.0, help="sampling temperature")
    _opt(s, p, "--timeout", type=float, default=30.0, help="per-request timeout in seconds")
    _opt(s, p, "--attempts", type=int, default=3, help="attempts per request")
    _opt(s, p, "--backoff", type=float, default=1.0, help="initial retry delay in seconds")
    _opt(s, p, "--rate", type=float, help="max requests per second")
    _opt(s, p, "--parallel", type=int, default=1, help="concurrent users")
    _opt(s, p, "--journal", help="progress journal (default: OUT.journal.jsonl)")

    s, p = add("pipeline", cmd_pipeline, "stage 1, stage 2 and evaluation end to end", True, "pipeline-run")
    _opt(s, p, "--synth", action="append", help="synthetic data: preset=NAME[,key=value...]")
    _opt(s, p, "--data", help="directory with posts.tsv, tweets.jsonl, seeds_s1.txt, seeds_s2.txt, truth.tsv")
    _opt(s, p, "--truth", help="truth labels (overrides DATA/truth.tsv)")
    _opt(s, p, "--stances", help="display names for the two stances, comma separated")
    _opt(s, p, "--model", choices=("sage", "gat", "mlp", "random"), default="gat", help="model")
    _opt(s, p, "--trials", type=int, default=5, help="seeded trials")
    _opt(s, p, "--seed", type=int, default=0, help="base seed for the trials")
    _train_options(s, p)
    _propagation_options(s, p)

    rp = sub.add_parser("replay", help="re-run a manifest and compare output digests")
    rp.add_argument("manifest", help="manifest.json written by an earlier run")
    rp.add_argument("--out", help="write outputs here instead of the recorded location")
    return ap, specs


def resolve_config(spec: Spec, args: argparse.Namespace) -> dict:
    cfg = dict(spec.defaults)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - spec.keys()
        if unknown:
            raise ConfigError(f"unknown setting(s) for {spec.name}: {sorted(unknown)}")
        cfg.update(file_cfg)
    for k, v in vars(args).items():
        if k not in ("command", "config", "verbose"):
            cfg[k] = v
    if spec.name == "synth":
        cfg["overrides"] = parse_assignments(cfg.get("overrides")) if isinstance(
            cfg.get("overrides"), list) else (cfg.get("overrides") or {})
    if isinstance(cfg.get("stances"), str):
        cfg["stances"] = cfg["stances"].split(",")
    # absolute paths so a manifest replays from any working directory
    for k in ("out", "posts", "graph", "seeds_s1", "seeds_s2", "tweets", "labels", "model_file", "pred",
              "truth", "requests", "journal", "data"):
        if cfg.get(k):
            cfg[k] = str(Path(cfg[k]).resolve())
    return cfg


def execute(spec: Spec, cfg: dict) -> tuple[int, Run | None]:
    missing = [k for k in spec.required if not cfg.get(k)]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        logger.error("configuration error: %s needs %s", spec.name, flags)
        return EXIT_CONFIG, None
    run = Run(spec.name, cfg, Path(cfg["out"]), spec.out_is_dir)
    t0 = time.perf_counter()
    try:
        spec.handler(run, cfg)
    except PartialFailure as exc:
        logger.error("%s", exc)
        run.write_manifest(time.perf_counter() - t0)
        return EXIT_RUNTIME, run
    except BaseException as exc:
        run.cleanup()
        if isinstance(exc, KeyboardInterrupt):
            raise
        if isinstance(exc, ConfigError):
            logger.error("configuration error: %s", exc)
            return EXIT_CONFIG, None
        if _is_data_error(exc):
            logger.error("data error: %s", exc)
            return EXIT_DATA, None
        logger.error("%s failed: %s: %s", spec.name, type(exc).__name__, exc)
        logger.debug("traceback", exc_info=True)
        return EXIT_RUNTIME, None
    run.write_manifest(time.perf_counter() - t0)
    return EXIT_OK, run


def replay(specs: dict[str, Spec], manifest_path, out=None) -> int:
    try:
        m = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        spec = specs[m["subcommand"]]
        cfg = dict(m["config"])
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        logger.error("cannot read manifest %s: %s", manifest_path, exc)
        return EXIT_CONFIG
    for path, digest in m.get("inputs", {}).items():
        if not Path(path).exists() or sha256_file(path) != digest:
            logger.error("input changed since the recorded run: %s", path)
            return EXIT_DATA
    if out is not None:
        cfg["out"] = str(Path(out).resolve())
    code, run = execute(spec, cfg)
    if code != EXIT_OK:
        return code
    now = run.output_digests()
    diff = sorted(k for k in set(now) | set(m["outputs"]) if now.get(k) != m["outputs"].get(k))
    if diff:
        logger.error("outputs differ from the manifest: %s", ", ".join(diff))
        return EXIT_RUNTIME
    print(f"replay of {spec.name}: {len(now)} output(s) identical")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    ap, specs = build_parser()
    args = ap.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "replay":
        return replay(specs, args.manifest, args.out)
    spec = specs[args.command]
    try:
        cfg = resolve_config(spec, args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    code, _ = execute(spec, cfg)
    return code


if __name__ == "__main__":
    sys.exit(main())
