"""Entry point: ``python -m src.stages``."""

import sys

from src.stages.cli import main

if __name__ == "__main__":
    sys.exit(main())
