import sys

from lincrack.cli.main import main

sys.exit(main())
