from .transition_memory import TransitionMemory, TrialEntry

__all__ = ["TransitionMemory", "TrialEntry"]
