"""Allow running as `python -m cardauth`."""

import sys

from .cli import main

sys.exit(main())
