class ConfigError(ValueError):
    """Invalid configuration value (schedule bounds, config keys, etc.)."""
