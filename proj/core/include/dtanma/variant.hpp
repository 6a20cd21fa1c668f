#pragma once

#include <stdexcept>
#include <string>

namespace dtanma {

enum class ModelVariant { Independent, MetaRegression, Anova, AnovaPlus };

enum class CovarianceStructure { Full4, BlockDiag22, Reduced2 };

// Placement of the Wishart(identity, dim) hyper-prior: on the precision
// matrix of each random-effects block (conjugate Gibbs draws available) or
// on the covariance matrix itself.
enum class WishartConvention { Precision, Covariance };

std::string to_string(ModelVariant v);
std::string to_string(CovarianceStructure c);
std::string to_string(WishartConvention w);

ModelVariant variant_from_string(const std::string& s);
CovarianceStructure covariance_from_string(const std::string& s);
WishartConvention wishart_from_string(const std::string& s);

}  // namespace dtanma
