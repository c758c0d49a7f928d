"""Run the reference scenario, or any soft-pvtol subcommand given on the command line"""
import sys
from pathlib import Path

from soft_pvtol.cli import main

CONFIG = Path(__file__).parent / "configs" / "flight.cfg"


if __name__ == "__main__":
    argv = sys.argv[1:] or ["simulate", "--config", str(CONFIG)]
    sys.exit(main(argv))
