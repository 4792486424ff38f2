# -*- coding: utf-8 -*-
"""Command line interface: python -m DualSelfDistillation <command> [flags].

Commands
    gen-data   write a seeded phantom dataset and its manifest
    train      train a network, see training/trainer.py for the run directory
    eval       evaluate a checkpoint on a manifest split
    ablate     compare ablation modes over several seeds
    verify     run the self checks of losses, gradients and metrics

Errors are printed to stderr as one JSON object {"error": ..., "message": ...}.
Exit codes: 0 success, 1 internal failure or failed checks, 2 usage or
configuration error, 3 I/O error.
"""
import argparse
import json
import logging
import sys

import matplotlib
matplotlib.use("Agg")

from . import __version__
from .config import TrainConfig, ABLATION_MODES, PRECISIONS, load_train_config, num_workers_from_env
from .errors import DsdError, ConfigError, ContractViolation, ManifestError, VolumeFormatError
from .simulation import PhantomSpec, FreqNoise, LinearShading, MixedNoise, WhiteNoise, generate_dataset
from .simulation.phantom import LAYOUTS
from .presets import sanity_phantom, acceptance_phantom, SANITY_SPLIT, ACCEPTANCE_SPLIT

PHANTOM_PRESETS = {"sanity": (sanity_phantom, SANITY_SPLIT),
                   "acceptance": (acceptance_phantom, ACCEPTANCE_SPLIT),
                   }

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(DsdError, ValueError):
    """Invalid command line flags."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("%s: %s" % (self.prog, message))


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated integers, got %r" % text)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated numbers, got %r" % text)


def _shape(text):
    values = _int_list(text)
    if len(values) == 1:
        values = values*3
    if len(values) != 3:
        raise argparse.ArgumentTypeError("expected one or three integers, got %r" % text)
    return tuple(values)


def _modes(text):
    modes = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in modes if m not in ABLATION_MODES]
    if unknown:
        raise argparse.ArgumentTypeError("unknown ablation modes %s, expected %s" % (unknown, ", ".join(ABLATION_MODES)))
    return modes


def build_parser():
    parser = _Parser(prog="DualSelfDistillation",
                     description="Dual self-distillation for 3D U-shaped segmentation networks.")
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    gen = commands.add_parser("gen-data", help="generate a phantom dataset")
    gen.add_argument("--output-dir", required=True)
    gen.add_argument("--num", type=int, default=20, help="number of samples")
    gen.add_argument("--shape", type=_shape, default=(32, 32, 32), help="N or H,W,D")
    gen.add_argument("--classes", type=int, default=4, help="K including background")
    gen.add_argument("--channels", type=int, default=1, help="image channels")
    gen.add_argument("--structures", type=int, default=1, help="structures per class")
    gen.add_argument("--layout", choices=LAYOUTS, default="nested")
    gen.add_argument("--noise-sigma", type=float, default=0.1)
    gen.add_argument("--colored-noise", type=float, default=0., metavar="SIGMA",
                     help="add spatially correlated noise of this standard deviation")
    gen.add_argument("--shading", type=float, default=0., metavar="AMPLITUDE",
                     help="add a linear intensity ramp of this amplitude along the first axis")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--split", type=_float_list, default=[0.6, 0.2, 0.2], help="train,val,test ratios or counts")
    gen.add_argument("--preset", choices=sorted(PHANTOM_PRESETS),
                     help="ready-made phantom family with its own split, only --seed applies on top")
    gen.add_argument("--overwrite", action="store_true")

    for name, help_text in (("train", "train one network"), ("ablate", "compare ablation modes")):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", help="TrainConfig JSON file")
        sub.add_argument("--manifest", help="dataset manifest, overrides the config")
        sub.add_argument("--output-dir", help="overrides the config")
        sub.add_argument("--epochs", type=int)
        sub.add_argument("--precision", choices=PRECISIONS)
        sub.add_argument("--overwrite", action="store_true")
        if name == "train":
            sub.add_argument("--ablation-mode", choices=ABLATION_MODES)
            sub.add_argument("--seed", type=int)
            sub.add_argument("--resume", help="checkpoint to continue from")
        else:
            sub.add_argument("--modes", type=_modes, default=["DS", "SDE", "SDD", "DSD"])
            sub.add_argument("--seeds", type=_int_list, default=[0, 1, 2])

    ev = commands.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--manifest", help="defaults to the manifest of the training config")
    ev.add_argument("--split", choices=("train", "val", "test"), default="test")
    ev.add_argument("--output-dir", help="defaults to the directory of the checkpoint")
    ev.add_argument("--pooled", action="store_true", help="pooled HD95 instead of the maximum of both directions")
    ev.add_argument("--plot-slices", action="store_true", help="save an image/truth/prediction slice per sample")
    ev.add_argument("--overwrite", action="store_true")

    verify = commands.add_parser("verify", help="run the self checks")
    verify.add_argument("--json", action="store_true", help="machine readable results on stdout")
    verify.add_argument("--quick", action="store_true", help="fewer random instances")
    verify.add_argument("--dice-eps-override", type=float, default=None,
                        help="Dice smoothing used by the implementation only (mutation testing)")
    return parser


def _train_config(args):
    cfg = load_train_config(args.config) if args.config else TrainConfig()
    overrides = {}
    for flag, field in (("manifest", "manifest_path"), ("output_dir", "output_dir"), ("epochs", "epochs"),
                        ("precision", "precision"), ("ablation_mode", "ablation_mode"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    cfg = cfg.replace(**overrides) if overrides else cfg
    if cfg.manifest_path is None:
        raise ConfigError("no dataset manifest given (--manifest or manifest_path in --config)",
                          field="manifest_path")
    return cfg


def cmd_gen_data(args):
    if args.preset is not None:
        make_spec, split = PHANTOM_PRESETS[args.preset]
        path = generate_dataset(args.output_dir, make_spec(args.seed), sum(split), ratios=split,
                                num_workers=num_workers_from_env(), overwrite=args.overwrite)
        print(path)
        return EXIT_OK
    components = [WhiteNoise(args.noise_sigma)]
    if args.colored_noise > 0:
        components.append(FreqNoise(-2., args.colored_noise))
    if args.shading > 0:
        components.append(LinearShading(args.shading))
    noise = components[0] if len(components) == 1 else MixedNoise(components)
    spec = PhantomSpec(shape=args.shape, num_classes=args.classes, num_structures=args.structures,
                       noise_sigma=args.noise_sigma, seed=args.seed, in_channels=args.channels,
                       layout=args.layout, noise=noise)
    path = generate_dataset(args.output_dir, spec, args.num, ratios=args.split, num_workers=num_workers_from_env(),
                            overwrite=args.overwrite)
    print(path)
    return EXIT_OK


def cmd_train(args):
    from .training import train
    cfg = _train_config(args)
    run_dir = train(cfg, resume_from=args.resume, overwrite=args.overwrite)
    print(run_dir)
    return EXIT_OK


def cmd_eval(args):
    import os
    from .training import evaluate, load_checkpoint
    manifest = args.manifest
    if manifest is None:
        manifest = load_checkpoint(args.checkpoint).config.manifest_path
        if manifest is None:
            raise ConfigError("the checkpoint config names no manifest, pass --manifest", field="manifest_path")
    output_dir = args.output_dir or os.path.dirname(os.path.abspath(args.checkpoint))
    result = evaluate(args.checkpoint, manifest, args.split, output_dir=output_dir, overwrite=args.overwrite,
                      num_workers=num_workers_from_env(), pooled=args.pooled, plot_slices=args.plot_slices)
    print(json.dumps(result.summary["overall"], indent=2))
    return EXIT_OK


def cmd_ablate(args):
    from .training import ablate
    cfg = _train_config(args)
    if len(args.modes) < 2:
        raise UsageError("--modes needs at least two ablation modes")
    table = ablate(cfg, args.modes, args.seeds, cfg.output_dir, overwrite=args.overwrite)
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_verify(args):
    from .analysis.verification import run_all
    results = run_all(impl_smooth_eps=args.dice_eps_override, quick=args.quick)
    if args.json:
        print(json.dumps([r.to_dict() for r in results], indent=2))
    else:
        for result in results:
            print("%-22s %s  %6.1fs  %s" % (result.name, "pass" if result.passed else "FAIL", result.seconds,
                                            result.detail))
    return EXIT_OK if all(r.passed for r in results) else EXIT_INTERNAL


COMMANDS = {"gen-data": cmd_gen_data,
            "train": cmd_train,
            "eval": cmd_eval,
            "ablate": cmd_ablate,
            "verify": cmd_verify,
            }


def exit_code(err):
    if isinstance(err, (VolumeFormatError, OSError)):
        return EXIT_IO
    if isinstance(err, (UsageError, ConfigError, ContractViolation, ManifestError, ValueError)):
        return EXIT_USAGE
    return EXIT_INTERNAL


def report_error(err):
    sys.stderr.write(json.dumps({"error": type(err).__name__, "message": str(err)}) + "\n")


def main(argv=None):
    """Runs one command; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as err:
        report_error(err)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as err:
        code = exit_code(err)
        if code == EXIT_INTERNAL:
            logger.exception("internal error")
        report_error(err)
        return code
