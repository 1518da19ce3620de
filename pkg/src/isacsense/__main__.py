"""Allow ``python -m isacsense``."""

import sys

from isacsense.cli import main

if __name__ == "__main__":
    sys.exit(main())
