import sys

from gpmoments.cli import main

sys.exit(main())
