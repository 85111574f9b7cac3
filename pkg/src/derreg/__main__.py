import sys

from derreg.cli import main

sys.exit(main())
