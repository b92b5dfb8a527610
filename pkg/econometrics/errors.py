class InsufficientData(ValueError):
    pass


class DegenerateSeries(ValueError):
    pass


class SingularDesign(ValueError):
    pass


class NonConvergence(RuntimeError):
    """
    Оптимизатор не сошёлся. best_params и grad_norm описывают лучшую найденную точку.
    """

    def __init__(self, message: str, best_params=None, grad_norm: float = float('nan')):
        super().__init__(message)
        self.best_params = best_params
        self.grad_norm = grad_norm
