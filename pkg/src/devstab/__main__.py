import sys

from devstab.cli import main

sys.exit(main())
