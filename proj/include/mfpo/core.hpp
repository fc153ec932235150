#ifndef MFPO_CORE_HPP
#define MFPO_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfpo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Tolerance on the total mass of a normalized measure.
inline constexpr double kMassTol = 1e-12;
/// Mass drift above kMassTol but below this is silently renormalized.
inline constexpr double kRenormTol = 1e-9;

class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class IndexError : public std::out_of_range {
public:
    explicit IndexError(const std::string& what) : std::out_of_range(what) {}
};

/// A computation was refused because its state count exceeds the configured budget.
class BudgetExceeded : public std::runtime_error {
public:
    BudgetExceeded(const std::string& what, double count)
        : std::runtime_error(what), count_(count) {}
    double count() const { return count_; }

private:
    double count_;
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Discrete index of a control in a model's finite control set.
using ControlIndex = std::size_t;

/// Closed-loop control map: one control index per observation cell.
using ControlMap = std::vector<ControlIndex>;

} // namespace mfpo

#endif
