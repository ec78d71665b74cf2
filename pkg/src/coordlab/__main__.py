import sys

from coordlab.cli import main

sys.exit(main())
