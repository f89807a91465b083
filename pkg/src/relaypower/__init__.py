"""Power allocation for a two-hop amplify-and-forward link over parallel subchannels."""
