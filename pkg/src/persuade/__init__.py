"""Online and offline signaling to many receivers with submodular sender payoffs."""
