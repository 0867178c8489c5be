"""Allow ``python -m rgdkit`` as an alias for the ``rgdkit`` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
