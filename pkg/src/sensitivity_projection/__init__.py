"""sensitivity_projection

Sensitivity analysis for the average causal effect under unmeasured
confounding, with influence-function projection onto submodels defined by
conditional independencies among baseline covariates.

"""
