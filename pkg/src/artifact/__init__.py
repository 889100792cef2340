"""Robust POMDPs with stickiness and order of play."""
