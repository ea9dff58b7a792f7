"""Run generator-based recursion on an explicit stack.

A recursive routine is written as a generator that ``yield``s the generator
for each sub-call and receives the sub-call's return value back.  ``run``
drives the whole call tree without growing the Python call stack, so formula
routines work on inputs nested to depth 10,000 and beyond.
"""

from types import GeneratorType


def run(gen):
    stack = [gen]
    value = None
    while stack:
        try:
            sub = stack[-1].send(value)
        except StopIteration as stop:
            stack.pop()
            value = stop.value
            continue
        if not isinstance(sub, GeneratorType):
            raise TypeError(f"trampolined routine yielded {type(sub).__name__}")
        stack.append(sub)
        value = None
    return value
