__all__ = ["autodiff", "layers", "optim", "serialize", "spline"]
