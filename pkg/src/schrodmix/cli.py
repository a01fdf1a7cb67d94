"""Command line front end.

    schrodmix <kind> --config <path> [--seed N] [--out DIR]

Exit codes: 0 success, 2 validation failure, 3 blow-up, 4 I/O failure.
The positional kind must match the config's [experiment] kind; it is there
so shell history says what a command did.
"""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, load_config, run_experiment
from .dynamics import BlowUpError
from .spectral import ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BLOWUP = 3
EXIT_IO = 4


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="schrodmix",
        description="spectral experiments for a damped stochastic NLS on the torus",
    )
    ap.add_argument("kind", choices=KINDS, help="experiment kind (must match the config)")
    ap.add_argument("--config", required=True, help="path to a line-oriented config file")
    ap.add_argument("--seed", type=int, default=None, help="override the [run] seed")
    ap.add_argument("--out", default=None, help="override the [run] output_dir")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.kind != args.kind:
            raise ValidationError(
                "config requests kind %r but the command says %r" % (cfg.kind, args.kind)
            )
        manifest = run_experiment(cfg, out_dir=args.out, seed=args.seed)
    except ValidationError as exc:
        print("validation error: %s" % exc, file=sys.stderr)
        return EXIT_VALIDATION
    except BlowUpError as exc:
        print("blow-up: %s" % exc, file=sys.stderr)
        return EXIT_BLOWUP
    except OSError as exc:
        print("i/o error: %s" % exc, file=sys.stderr)
        return EXIT_IO
    print(
        "%s: wrote %d file(s), config digest %s"
        % (manifest.kind, len(manifest.outputs), manifest.config_digest[:12])
    )
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
