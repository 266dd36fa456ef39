"""Command-line front end.

Subcommands cover the whole pipeline: generate (procedural corpora to trace
files), pretrain (trace corpus -> backbone weights), train-irl (aesthetic
scoring with SL / ME-IRL / GAIL, singly or as the full method x init
matrix), fewshot (probe / ANIL / FOMAML / ProtoNet report), and serve (the
upload endpoint for the browser labeler).

Exit codes: 0 success; 1 validation failure (bad config values, invalid
trace documents, unresolvable referenced paths, unknown methods); 2 I/O
failure or bad invocation (unreadable and unwritable files, occupied
ports, unknown flags).

Reports are tab-separated text written to stdout, and duplicated to --out
when given. All commands are reproducible from --seed alone.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .envs import (expert_fold_trajectory, folding_actions, generate_garments,
                   generate_rooms, perturb_room, room_actions)
from .fewshot import (GlyphDataset, adapted_query_accuracy, anil_meta_train,
                      fomaml_meta_train, fomaml_query_accuracy, logistic_probe,
                      protonet_episode_loss, protonet_meta_train, sample_episode)
from .geometry import generate_trace
from .irl import precision_at_k, train_irl, train_sl
from .network import FeatureExtractor, load_into, save_weights
from .pretrain import (EmbeddingTable, PretrainConfig, load_embeddings,
                       pretrain)
from .server import TraceStore, build_server, default_puzzles, puzzles_from_directory
from .traceio import (TraceFormatError, document_from_solve,
                      document_from_trajectory, document_violations,
                      load_document, save_document, solve_from_document)


@dataclass
class RunConfig:
    """Everything a run needs beyond the command line; JSON on disk.

    Paths may be empty strings, meaning "not used"; nonempty input paths
    must exist when the command that reads them validates its config.
    """

    seed: int = 0
    eval_seeds: int = 5            # seeds behind every mean +/- sd
    trace_count: int = 200         # tangram corpus size
    pretrain_epochs: int = 4
    sl_epochs: int = 12
    irl_iterations: int = 15
    irl_experts_per_iteration: int = 6
    meta_episodes: int = 30        # meta-training episodes per seed
    eval_episodes: int = 10        # evaluation episodes per seed
    glyph_classes: int = 30
    glyph_samples: int = 20
    traces: str = "traces"         # directory of trace documents
    weights: str = "weights.tgrm"
    embeddings: str = ""           # empty: hashed fallback vectors
    reports: str = "reports"

    def save(self, path):
        text = json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def load(cls, path):
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(payload, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValueError(f"{path}: unknown config keys {unknown}")
        return cls(**payload)

    def validate(self, need_paths=()):
        for name in ("eval_seeds", "trace_count", "pretrain_epochs",
                     "sl_epochs", "irl_iterations", "meta_episodes",
                     "eval_episodes", "glyph_classes", "glyph_samples"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"config.{name}: need a positive integer, "
                                 f"got {value!r}")
        for name in need_paths:
            value = getattr(self, name)
            if value and not Path(value).exists():
                raise ValueError(f"config.{name}: path {value!r} does not exist")


def _config_from(args):
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


def _mean_sd(values):
    values = np.asarray(values, dtype=np.float64)
    sd = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return f"{float(values.mean()):.3f}+/-{sd:.3f}"


def _emit_report(lines, out):
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text, encoding="utf-8")


# -- generate -------------------------------------------------------------------

def _write_split(trajectories, kind, out):
    for split, trajs in trajectories.items():
        directory = Path(out) / split
        directory.mkdir(parents=True, exist_ok=True)
        for i, traj in enumerate(trajs):
            doc = document_from_trajectory(traj, kind, author="generator")
            save_document(doc, directory / f"{kind}_{split}_{i:03d}.json")
    return {split: len(trajs) for split, trajs in trajectories.items()}


def cmd_generate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "tangram":
        for i in range(args.count):
            # one name per trace keeps the meaning loss discriminative;
            # shared names make distinct solves chase one embedding
            trace = generate_trace(args.seed + i,
                                   variant="A" if i % 2 == 0 else "B",
                                   puzzle_name=f"assembly {i:03d}")
            doc = document_from_solve(trace, author="generator")
            save_document(doc, out / f"tangram_{i:04d}.json")
        print(f"wrote {args.count} tangram traces to {out}")
    elif args.kind == "folding":
        train, test = generate_garments(args.seed)
        counts = _write_split(
            {"train": [expert_fold_trajectory(g) for g in train],
             "test": [expert_fold_trajectory(g) for g in test]},
            "folding", out)
        print(f"wrote {counts['train']} train + {counts['test']} test "
              f"folding trajectories to {out}")
    else:
        train, test = generate_rooms(args.seed)
        splits = {}
        for split, scenes in (("train", train), ("test", test)):
            trajs = []
            for i, scene in enumerate(scenes):
                traj = perturb_room(scene, 3 + i % 4, args.seed * 1000 + i)
                traj.name = f"room_{split}_{i:02d}"
                trajs.append(traj)
            splits[split] = trajs
        counts = _write_split(splits, "room", out)
        print(f"wrote {counts['train']} train + {counts['test']} test "
              f"room trajectories to {out}")
    return 0


# -- pretrain -------------------------------------------------------------------

def _load_trace_corpus(directory):
    paths = sorted(Path(directory).glob("*.json"))
    traces = []
    problems = []
    for path in paths:
        try:
            doc = load_document(path)
        except TraceFormatError as exc:
            problems.append(f"{path.name}: {exc}")
            continue
        if doc.kind != "tangram":
            continue
        violations = document_violations(doc)
        if violations:
            problems.extend(f"{path.name}: {v}" for v in violations)
            continue
        traces.append(solve_from_document(doc))
    if problems:
        raise ValueError("invalid traces in corpus:\n  " + "\n  ".join(problems))
    if not traces:
        raise ValueError(f"no tangram trace documents under {directory}")
    return traces


def cmd_pretrain(args):
    config = _config_from(args)
    config.validate(need_paths=("traces", "embeddings"))
    traces = _load_trace_corpus(config.traces)
    embeddings = (load_embeddings(config.embeddings) if config.embeddings
                  else EmbeddingTable())
    reports = Path(config.reports)
    reports.mkdir(parents=True, exist_ok=True)
    model, history = pretrain(
        traces, embeddings,
        PretrainConfig(epochs=config.pretrain_epochs, seed=config.seed),
        log_path=reports / "pretrain_log.tsv")
    weights_path = args.out or config.weights
    # only the backbone transfers; downstream commands load this file
    # straight into a FeatureExtractor, so head parameters stay out
    save_weights(weights_path, model.backbone.named_parameters())
    print(f"trained on {len(traces)} traces for {config.pretrain_epochs} "
          f"epochs; weights -> {weights_path}, "
          f"log -> {reports / 'pretrain_log.tsv'}")
    if history:
        print(f"final loss {history[-1]['total']:.4f} "
              f"(ccl {history[-1]['ccl']:.4f}, pml {history[-1]['pml']:.4f})")
    return 0


# -- train-irl ------------------------------------------------------------------

def _expert_suites(task, seed):
    """(train trajectories, test trajectories, action list) for a task."""
    if task == "folding":
        train, test = generate_garments(seed)
        return ([expert_fold_trajectory(g) for g in train],
                [expert_fold_trajectory(g) for g in test],
                folding_actions())
    train, test = generate_rooms(seed)

    def trajs(scenes):
        return [perturb_room(s, 3 + i % 4, seed * 1000 + i)
                for i, s in enumerate(scenes)]

    # index past a scene's item count is a harmless no-op action, so one
    # action list sized for the largest scene serves every scene
    return trajs(train), trajs(test), room_actions(15)


def _train_scorer(method, experts, actions, config, seed, weights):
    if method == "sl":
        model, _ = train_sl(experts, epochs=config.sl_epochs, seed=seed,
                            backbone_weights=weights)
        return model
    model, _ = train_irl(
        method, experts, actions, iterations=config.irl_iterations,
        seed=seed, backbone_weights=weights,
        experts_per_iteration=config.irl_experts_per_iteration)
    return model


def _precision_row(model, trajectories):
    cells = []
    for k in (1, 2, 3):
        cells.append(np.mean([precision_at_k(model, t, k)
                              for t in trajectories]))
    return cells


def cmd_train_irl(args):
    config = _config_from(args)
    config.validate(need_paths=())
    if args.pretrained_weights and not Path(args.pretrained_weights).exists():
        raise ValueError(f"--pretrained-weights: path "
                         f"{args.pretrained_weights!r} does not exist")
    if args.matrix:
        if not args.pretrained_weights:
            raise ValueError("--matrix needs --pretrained-weights for the "
                             "pretrained half of the table")
        methods = ("sl", "me-irl", "gail")
        inits = (("random", None), ("pretrained", args.pretrained_weights))
    else:
        methods = (args.method,)
        inits = ((("pretrained", args.pretrained_weights)
                  if args.pretrained_weights else ("random", None)),)
    train_experts, test_experts, actions = _expert_suites(args.task, config.seed)
    lines = ["method\tinit\tsplit\tP@1\tP@2\tP@3"]
    for method in methods:
        for init_name, weights in inits:
            per_split = {"train": [], "test": []}
            for s in range(config.eval_seeds):
                model = _train_scorer(method, train_experts, actions,
                                      config, config.seed + s, weights)
                per_split["train"].append(_precision_row(model, train_experts))
                per_split["test"].append(_precision_row(model, test_experts))
            for split in ("train", "test"):
                rows = np.array(per_split[split])  # (seeds, 3)
                cells = "\t".join(_mean_sd(rows[:, j]) for j in range(3))
                lines.append(f"{method}\t{init_name}\t{split}\t{cells}")
    _emit_report(lines, args.out)
    return 0


# -- fewshot --------------------------------------------------------------------

def _fewshot_backbone(seed, weights):
    backbone = FeatureExtractor(seed)
    if weights:
        load_into(backbone, weights)
    return backbone


def _fewshot_accuracy(method, backbone, dataset, n_way, k_shot, config, seed):
    eval_episodes = [sample_episode(dataset, n_way, k_shot, 5,
                                    100_000 + 1000 * seed + e)
                     for e in range(config.eval_episodes)]
    if method == "probe":
        return np.mean([logistic_probe(backbone, ep) for ep in eval_episodes])
    if method == "anil":
        model = anil_meta_train(backbone, dataset, config.meta_episodes,
                                seed=seed, n_way=n_way, k_shot=k_shot)
        return np.mean([adapted_query_accuracy(model, ep)
                        for ep in eval_episodes])
    if method == "fomaml":
        model = fomaml_meta_train(backbone, dataset, config.meta_episodes,
                                  seed=seed, n_way=n_way, k_shot=k_shot)
        return np.mean([fomaml_query_accuracy(model, ep)
                        for ep in eval_episodes])
    trained = protonet_meta_train(backbone, dataset, config.meta_episodes,
                                  seed=seed, n_way=n_way, k_shot=k_shot)
    return np.mean([protonet_episode_loss(trained, ep)[1]
                    for ep in eval_episodes])


def cmd_fewshot(args):
    config = _config_from(args)
    config.validate(need_paths=())
    if args.pretrained_weights and not Path(args.pretrained_weights).exists():
        raise ValueError(f"--pretrained-weights: path "
                         f"{args.pretrained_weights!r} does not exist")
    dataset = GlyphDataset(config.glyph_classes, config.glyph_samples,
                           config.seed)
    inits = [("random", None)]
    if args.pretrained_weights:
        inits.append(("pretrained", args.pretrained_weights))
    lines = ["setting\tmethod\tinit\taccuracy"]
    for n_way, k_shot in ((5, 5), (20, 5)):
        for method in ("probe", "anil", "fomaml", "protonet"):
            for init_name, weights in inits:
                accs = [_fewshot_accuracy(
                            method, _fewshot_backbone(config.seed + s, weights),
                            dataset, n_way, k_shot, config, seed=s)
                        for s in range(config.eval_seeds)]
                lines.append(f"{n_way}-way-{k_shot}-shot\t{method}\t"
                             f"{init_name}\t{_mean_sd(accs)}")
    _emit_report(lines, args.out)
    return 0


# -- serve ----------------------------------------------------------------------

def cmd_serve(args):
    store = TraceStore(args.out)
    puzzles = puzzles_from_directory(store.directory)
    if not puzzles:
        puzzles = default_puzzles(args.seed or 0)
    httpd = build_server(store, puzzles, port=args.port)
    host, port = httpd.server_address[:2]
    print(f"listening on http://{host}:{port} "
          f"({len(puzzles)} puzzles, traces -> {store.directory})")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return 0


# -- entry point ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="tanlab",
        description="solve-trace pretraining, aesthetic scoring, and "
                    "few-shot recognition",
        epilog="exit codes: 0 success, 1 validation failure, 2 I/O failure "
               "or bad invocation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write procedural trace documents")
    p.add_argument("kind", choices=("tangram", "folding", "room"))
    p.add_argument("--count", type=int, default=200,
                   help="tangram corpus size (folding and room are fixed)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="traces")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain", help="train the backbone on a trace corpus")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="weights path (overrides config.weights)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train-irl", help="score learning on expert trajectories")
    p.add_argument("--method", choices=("sl", "me-irl", "gail"), default="sl")
    p.add_argument("--task", choices=("folding", "room"), default="folding")
    p.add_argument("--pretrained-weights")
    p.add_argument("--matrix", action="store_true",
                   help="all three methods x {random, pretrained}")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_train_irl)

    p = sub.add_parser("fewshot", help="episodic recognition report")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--pretrained-weights")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("serve", help="HTTP endpoint for labeler uploads")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="traces",
                   help="directory where uploads are stored")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TraceFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
