import argparse
import sys
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import ValidationError

from args import get_args_parser
from engine import COMMAND_RUNNERS, resolve_options
from src.config.settings import EnvSettings
from src.errors import NumericalCheckError, ValidationFailure

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse the command line, configure logging and run one command.

    Returns:
        int: 0 on success, 2 when inputs are rejected, 3 when a numerical check fails.
    """
    args = argparse.ArgumentParser('rotalign', parents=[get_args_parser()]).parse_args(argv)
    env = EnvSettings()
    logger.remove()
    logger.add(sys.stderr, level=env.log_level)
    np.set_printoptions(precision=6, linewidth=160)

    try:
        opts = resolve_options(args, env)
        logger.info(f"Running {args.command} with manifest {args.manifest} into {opts.out_dir}")
        COMMAND_RUNNERS[args.command](opts, args)
    except (ValidationFailure, ValidationError) as exc:
        logger.error(f"{args.command} rejected its inputs: {exc}")
        return EXIT_VALIDATION
    except NumericalCheckError as exc:
        logger.error(f"{args.command} failed a numerical check: {exc}")
        return EXIT_NUMERICAL
    logger.info(f"{args.command} finished")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
