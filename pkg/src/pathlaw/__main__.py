from pathlaw.cli import main

main()
