from polynet.cli import main

main()
