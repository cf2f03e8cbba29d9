import sys

from galign.cli import main

sys.exit(main())
