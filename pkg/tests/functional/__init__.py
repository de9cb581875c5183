"""End-to-end runs of the command line and long integrations."""
