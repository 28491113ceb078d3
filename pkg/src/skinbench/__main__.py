import sys

from skinbench.cli import main

sys.exit(main())
