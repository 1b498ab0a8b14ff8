"""Particle approximations of Vlasov equations on digraph measures."""
