import sys

from .io_cli import main

sys.exit(main())
