"""Allow ``python -m csicrypt``."""
import sys

from .cli import main

sys.exit(main())
