"""Short-term transit passenger flow forecasting per 4-hour daily segment."""
