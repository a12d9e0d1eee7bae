import sys

from dpmult.cli import main

sys.exit(main())
