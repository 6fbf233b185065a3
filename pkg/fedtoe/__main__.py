from fedtoe.main import main

raise SystemExit(main())
