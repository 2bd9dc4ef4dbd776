class KernelDomainError(ArithmeticError):
    """Raised by a tape backend; carries the instruction and point index."""

    def __init__(self, instr: int, point: int, reason: str):
        self.instr = int(instr)
        self.point = int(point)
        self.reason = reason
        super().__init__(f"{reason} (instruction {instr}, point {point})")
