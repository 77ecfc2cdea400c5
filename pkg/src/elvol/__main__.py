import sys

from elvol.cli import main

sys.exit(main())
