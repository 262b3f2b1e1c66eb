"""Run configuration: a key = value text file.

Keys before the first ``[section]`` header belong to ``[run]``. Sections and
keys (defaults in parentheses; the SVM/NN values are the published setup)::

    [run]      mode (sync)   seed (0)   out (runs/out)
               mode is one of sync, async, sequential-passive,
               sequential-active, delayed-iwal
    [data]     source (mnist): mnist | gaussian | checkerboard | threshold | sparse
               mnist:        positive (3,1 for svm; 3 for nn), negative (5,7 | 5),
                             scale (-1,1 for svm; 0,1 for nn), images, labels,
                             test_images, test_labels (file names under $PARACTIVE_DATA)
               gaussian:     n (20000), dim (2), separation (3.0)
               checkerboard: n (50000), grid (20), spread (0.2)
               threshold:    n (5000), noise_rate (0.0)
               sparse:       path, test_path, dim
               synthetic:    test_n (5000), data_seed (seed), test_seed (data_seed + 1)
               shuffle_seed  (unset: stream in file order)
    [learner]  kind (svm): svm | nn | finite
               svm: C (1.0), gamma (0.012), cache_rows (1024)
               nn:  hidden (100), step (0.07), init (uniform)
               finite: size (1001)
    [rule]     kind (margin): margin | constant | iwal
               eta (0.1 parallel, 0.01 sequential-active; 0.0005 for nn), p (1.0), C0 (2.0)
    [cluster]  k (1), B (3968), warmstart (4000), timing (unit), workers (1),
               rates (comma list), latency (zero): zero | constant | uniform | exponential,
               latency_value, latency_low, latency_high, latency_mean,
               checkpoint_every (1 round), checkpoint_events (1000),
               checkpoint_examples (B)
    [delay]    kind (unit): unit | fixed | random, B (100), dist (poisson),
               lam, p, high, cap
    [sweep]    k (1,2,4,8,16,32,64,128), targets (largest final error of the sweep),
               passive (0): also run the sequential passive baseline
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

MODES = ("sync", "async", "sequential-passive", "sequential-active", "delayed-iwal")
DATA_ENV = "PARACTIVE_DATA"

MNIST_FILES = {
    "images": "train-images-idx3-ubyte",
    "labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

# Published setups; a bare config with learner.kind set reproduces them.
SVM_DEFAULTS = {"C": 1.0, "gamma": 0.012}
NN_DEFAULTS = {"hidden": 100, "step": 0.07}
ETA_PARALLEL = 0.1
ETA_SEQUENTIAL = 0.01
ETA_NN = 0.0005
DEFAULT_B = 3968
DEFAULT_WARMSTART = 4000


class ConfigError(ValueError):
    """Invalid configuration; the message names the file, line and field."""


@dataclass
class RunConfig:
    mode: str = "sync"
    seed: int = 0
    out: str = "runs/out"
    data: dict = field(default_factory=dict)
    learner: dict = field(default_factory=lambda: {"kind": "svm", **SVM_DEFAULTS})
    rule: dict = field(default_factory=lambda: {"kind": "margin", "eta": ETA_PARALLEL})
    cluster: dict = field(default_factory=dict)
    delay: dict = field(default_factory=lambda: {"kind": "unit"})
    sweep: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def cluster_config(self, k=None):
        from paractive.engine import ClusterConfig

        c = self.cluster
        k = int(k if k is not None else c.get("k", 1))
        latency = {"dist": c.get("latency", "zero")}
        for key in ("value", "low", "high", "mean"):
            if f"latency_{key}" in c:
                latency[key] = float(c[f"latency_{key}"])
        rates = c.get("rates")
        return ClusterConfig(
            k=k,
            B=int(c.get("B", DEFAULT_B)),
            warmstart_size=int(c.get("warmstart", DEFAULT_WARMSTART)),
            learner=dict(self.learner),
            rule=dict(self.rule),
            seed=self.seed,
            timing=c.get("timing", "unit"),
            rates=list(rates) if rates is not None else None,
            latency=latency,
            checkpoint_every=int(c.get("checkpoint_every", 1)),
            checkpoint_events=int(c.get("checkpoint_events", 1000)),
            checkpoint_examples=c.get("checkpoint_examples"),
            workers=int(c.get("workers", 1)),
        )

    def delay_model(self):
        from paractive.engine import DelayModel

        d = dict(self.delay)
        params = {k: d.pop(k) for k in ("lam", "p", "high") if k in d}
        return DelayModel(kind=d.get("kind", "unit"), B=int(d.get("B", 100)),
                          dist=d.get("dist", "poisson"), params=params, cap=d.get("cap"))

    def to_dict(self):
        return {"mode": self.mode, "seed": self.seed, "out": self.out, "data": self.data,
                "learner": self.learner, "rule": self.rule, "cluster": self.cluster,
                "delay": self.delay, "sweep": self.sweep}


# -- parsing -----------------------------------------------------------------

_INT = int
_FLOAT = float


def _ints(v):
    return [int(s) for s in v.split(",") if s.strip()]


def _floats(v):
    return [float(s) for s in v.split(",") if s.strip()]


def _pair(v):
    lo, hi = _floats(v)
    return (lo, hi)


def _str(v):
    return v.strip()


def _bool(v):
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


SCHEMA = {
    "run": {"mode": _str, "seed": _INT, "out": _str},
    "data": {"source": _str, "positive": _ints, "negative": _ints, "scale": _pair,
             "images": _str, "labels": _str, "test_images": _str, "test_labels": _str,
             "n": _INT, "dim": _INT, "separation": _FLOAT, "grid": _INT, "spread": _FLOAT,
             "noise_rate": _FLOAT, "path": _str, "test_path": _str, "test_n": _INT,
             "data_seed": _INT, "test_seed": _INT, "shuffle_seed": _INT},
    "learner": {"kind": _str, "C": _FLOAT, "gamma": _FLOAT, "cache_rows": _INT,
                "hidden": _INT, "step": _FLOAT, "init": _str, "size": _INT},
    "rule": {"kind": _str, "eta": _FLOAT, "p": _FLOAT, "C0": _FLOAT},
    "cluster": {"k": _INT, "B": _INT, "warmstart": _INT, "timing": _str, "workers": _INT,
                "rates": _floats, "latency": _str, "latency_value": _FLOAT,
                "latency_low": _FLOAT, "latency_high": _FLOAT, "latency_mean": _FLOAT,
                "checkpoint_every": _INT, "checkpoint_events": _INT,
                "checkpoint_examples": _INT},
    "delay": {"kind": _str, "B": _INT, "dist": _str, "lam": _FLOAT, "p": _FLOAT,
              "high": _INT, "cap": _INT},
    "sweep": {"k": _ints, "targets": _floats, "passive": _bool},
}


def _line_index(lines):
    """(section, key) -> 1-based line number in the original file."""
    where, section = {}, "run"
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
            where.setdefault((section, "*"), no)
            continue
        for sep in ("=", ":"):
            if sep in s:
                where.setdefault((section, s.split(sep, 1)[0].strip()), no)
                break
    return where


def parse_config(text, source="<string>"):
    lines = text.splitlines()
    where = _line_index(lines)

    def fail(section, key, msg):
        line = where.get((section, key))
        loc = f"{source}:{line}" if line else source
        raise ConfigError(f"{loc}: [{section}] {key}: {msg}")

    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text, source=source)
    except configparser.Error as exc:
        # the implied header shifts line numbers by one
        msg = str(exc).replace("\n", " ")
        raise ConfigError(f"{source}: {msg} (line numbers count an implied [run] header)") from None

    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            fail(section, "*", f"unknown section; expected one of {sorted(SCHEMA)}")
        out = values.setdefault(section, {})
        for key, raw in parser.items(section):
            conv = SCHEMA[section].get(key)
            if conv is None:
                fail(section, key, f"unknown key; expected one of {sorted(SCHEMA[section])}")
            try:
                out[key] = conv(raw)
            except ValueError:
                fail(section, key, f"cannot parse {raw!r}")
    return _build(values, source, fail)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))


def _build(values, source, fail):
    run = values.get("run", {})
    mode = run.get("mode", "sync")
    if mode not in MODES:
        fail("run", "mode", f"{mode!r} is not one of {', '.join(MODES)}")

    learner = dict(values.get("learner", {}))
    kind = learner.setdefault("kind", "finite" if mode == "delayed-iwal" else "svm")
    if kind == "svm":
        learner = {**SVM_DEFAULTS, **learner}
    elif kind == "nn":
        learner = {**NN_DEFAULTS, **learner}
    elif kind != "finite":
        fail("learner", "kind", f"{kind!r} is not one of svm, nn, finite")
    allowed = {"svm": {"C", "gamma", "cache_rows"}, "nn": {"hidden", "step", "init"},
               "finite": {"size"}}[kind] | {"kind"}
    for key in learner:
        if key not in allowed:
            fail("learner", key, f"not a parameter of the {kind} learner")

    rule = dict(values.get("rule", {}))
    rkind = rule.setdefault("kind", "iwal" if mode == "delayed-iwal" else "margin")
    if mode == "delayed-iwal":
        if kind != "finite":
            fail("learner", "kind", "delayed-iwal requires the finite learner")
        if rkind != "iwal":
            fail("rule", "kind", "delayed-iwal uses the iwal rule")
        rule.setdefault("C0", 2.0)
        if rule["C0"] < 2:
            fail("rule", "C0", "C0 must be >= 2")
    else:
        if kind == "finite":
            fail("learner", "kind", f"the finite learner only runs in delayed-iwal mode, not {mode}")
        if rkind == "iwal":
            fail("rule", "kind", "the iwal rule needs mode = delayed-iwal")
        if rkind == "margin":
            default = ETA_NN if kind == "nn" else (
                ETA_SEQUENTIAL if mode == "sequential-active" else ETA_PARALLEL)
            rule.setdefault("eta", default)
            if not rule["eta"] > 0:
                fail("rule", "eta", "eta must be positive")
        elif rkind == "constant":
            rule.setdefault("p", 1.0)
            if not 0 < rule["p"] <= 1:
                fail("rule", "p", "p must lie in (0, 1]")
        else:
            fail("rule", "kind", f"{rkind!r} is not one of margin, constant, iwal")

    data = dict(values.get("data", {}))
    src = data.setdefault("source", "threshold" if mode == "delayed-iwal" else "mnist")
    if src not in ("mnist", "gaussian", "checkerboard", "threshold", "sparse"):
        fail("data", "source", f"{src!r} is not a known source")
    if src == "mnist":
        data.setdefault("positive", [3] if kind == "nn" else [3, 1])
        data.setdefault("negative", [5] if kind == "nn" else [5, 7])
        data.setdefault("scale", (0.0, 1.0) if kind == "nn" else (-1.0, 1.0))
    if src == "sparse" and "path" not in data:
        fail("data", "path", "sparse source needs a path")
    if mode == "delayed-iwal" and src != "threshold":
        fail("data", "source", "delayed-iwal runs on the threshold task")

    cluster = dict(values.get("cluster", {}))
    if mode.startswith("sequential"):
        cluster.setdefault("k", 1)
        if cluster["k"] != 1:
            fail("cluster", "k", "sequential modes run on one node")
    if cluster.get("timing", "unit") not in ("unit", "wall"):
        fail("cluster", "timing", "must be unit or wall")
    if mode == "async" and cluster.get("timing", "unit") != "unit":
        fail("cluster", "timing", "the asynchronous engine simulates unit costs only")
    k, B = cluster.get("k", 1), cluster.get("B", DEFAULT_B)
    if mode == "sync" and (k < 1 or B < k or B % k):
        fail("cluster", "B", f"B={B} must be a positive multiple of k={k}")
    if "rates" in cluster and len(cluster["rates"]) != k:
        fail("cluster", "rates", f"need {k} rates, got {len(cluster['rates'])}")

    delay = dict(values.get("delay", {}))
    delay.setdefault("kind", "unit")
    if delay["kind"] not in ("unit", "fixed", "random"):
        fail("delay", "kind", "must be unit, fixed or random")

    sweep = dict(values.get("sweep", {}))
    if "k" in sweep and not sweep["k"]:
        fail("sweep", "k", "empty k list")

    return RunConfig(mode=mode, seed=run.get("seed", 0), out=run.get("out", "runs/out"),
                     data=data, learner=learner, rule=rule, cluster=cluster, delay=delay,
                     sweep=sweep, source=source)


# -- datasets ----------------------------------------------------------------

def data_root():
    return Path(os.environ.get(DATA_ENV, "data"))


def load_datasets(cfg: RunConfig):
    """(train, test) for the configured source.

    Raises FileNotFoundError for missing input files (a configuration error
    from the command line's point of view).
    """
    from paractive import data as D

    d = cfg.data
    src = d["source"]
    dseed = d.get("data_seed", cfg.seed)
    tseed = d.get("test_seed", dseed + 1)
    test_n = d.get("test_n", 5000)
    if src == "mnist":
        root = data_root()
        paths = {key: root / d.get(key, name) for key, name in MNIST_FILES.items()}
        for key, p in paths.items():
            if not p.is_file():
                raise FileNotFoundError(f"[data] {key}: {p} not found (set ${DATA_ENV})")
        out = []
        for img, lab in (("images", "labels"), ("test_images", "test_labels")):
            raw = D.load_idx(paths[img], paths[lab])
            task = D.make_binary_task(raw, d["positive"], d["negative"])
            out.append(D.scale_pixels(task, d["scale"]))
        train, test = out
    elif src == "gaussian":
        args = (d.get("n", 20000), d.get("dim", 2), d.get("separation", 3.0))
        train = D.synth_gaussian(dseed, *args)
        test = D.synth_gaussian(tseed, test_n, *args[1:])
    elif src == "checkerboard":
        args = (d.get("grid", 20), d.get("spread", 0.2))
        train = D.synth_checkerboard(dseed, d.get("n", 50000), *args)
        test = D.synth_checkerboard(tseed, test_n, *args)
    elif src == "threshold":
        rate = d.get("noise_rate", 0.0)
        train = D.synth_threshold(dseed, d.get("n", 5000), rate)
        test = D.synth_threshold(tseed, test_n, rate)
    else:
        for key in ("path", "test_path"):
            if key in d and not Path(d[key]).is_file():
                raise FileNotFoundError(f"[data] {key}: {d[key]} not found")
        train = D.load_sparse(d["path"], d.get("dim"))
        test = D.load_sparse(d["test_path"], train.dim) if "test_path" in d else None
    if "shuffle_seed" in d:
        train = D.shuffle(train, d["shuffle_seed"])
    return train, test
