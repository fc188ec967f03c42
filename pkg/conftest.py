collect_ignore = ["src/dirplan/__main__.py"]
