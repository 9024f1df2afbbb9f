"""Group-row-sparse recovery for grant-free random access via MCP proximal unfolding."""

__version__ = "0.1.0"
