__cli_version__ = "0.1.0"
