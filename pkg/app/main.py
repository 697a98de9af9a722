"""
Main application entry point.
"""
import sys
from typing import Optional, Sequence

from app import cli


def main(argv: Optional[Sequence[str]] = None) -> int:
    return cli.main(argv)


if __name__ == "__main__":
    sys.exit(main())
