"""Allow ``python -m otcpki`` as an alias for the ``otc`` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
