import sys

from heatreg.cli.main import main

sys.exit(main())
