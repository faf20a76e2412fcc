"""Geometric programming: posynomial models and a log-domain barrier solver."""

from gp.model import (GPError, Variable, Monomial, Posynomial, Constraint, GPProblem,
                      var, evaluate, condense, dumps)
from gp.solver import (GPDomainError, ConvexProgram, GPSolution, log_transform, solve,
                       OPTIMAL, INFEASIBLE, MAX_ITER)
