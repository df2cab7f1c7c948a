"""One module per subcommand; each exposes register() and run()"""
