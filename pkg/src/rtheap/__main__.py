import sys

from rtheap.cli import main

sys.exit(main())
