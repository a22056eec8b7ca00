"""Value types and schemas."""
