from .adapters import (Adapter, Affine, Exp, Fixed, Logistic, MtAlphaCells, Select, Stack,
                       adapter_from_dict, as_adapter, latent_histories)
from .nodes import (BirthDeathOffspring, CgfNode, Concat, Gamma, IidSum, LinearMap, Multinomial,
                    MultivariateNormal, Poisson, SumIndependent)
from .ops import (K3_contract, K4_contract, check_point, check_theta, differentiate_wrt_params,
                  eval_K, grad_t, hess_t)
from .serialize import (ModelSpec, dumps_node, load_model, loads_node, node_from_dict, node_to_dict,
                        save_model)

__all__ = [
    "Adapter", "Affine", "Exp", "Fixed", "Logistic", "MtAlphaCells", "Select", "Stack",
    "adapter_from_dict", "as_adapter", "latent_histories",
    "BirthDeathOffspring", "CgfNode", "Concat", "Gamma", "IidSum", "LinearMap", "Multinomial",
    "MultivariateNormal", "Poisson", "SumIndependent",
    "K3_contract", "K4_contract", "check_point", "check_theta", "differentiate_wrt_params",
    "eval_K", "grad_t", "hess_t",
    "ModelSpec", "dumps_node", "load_model", "loads_node", "node_from_dict", "node_to_dict",
    "save_model",
]
