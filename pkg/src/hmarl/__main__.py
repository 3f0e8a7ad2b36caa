import sys

from hmarl.cli import main

sys.exit(main())
