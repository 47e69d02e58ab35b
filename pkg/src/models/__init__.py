# Data models for the OISA pipeline
