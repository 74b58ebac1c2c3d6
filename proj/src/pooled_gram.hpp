#pragma once

#include <Eigen/Dense>

#include <vector>

#include "erfe/panel.hpp"
#include "erfe/within.hpp"

namespace erfe::detail {

// s_ik = sum_j psi_k(e_ijk) x_ij for every subject i (rows) and block k.
std::vector<Eigen::MatrixXd> weighted_subject_sums(const PanelData& panel, const PooledSubjectWeights& pw);

// Gram of the concentrated stacked design M_Z(taus)(I_q (x) X) under
// W = V (x) Psi (pq x pq):
//   G_kl = delta_kl v_k X' Psi_k X - sum_i v_k v_l s_ik s_il' / D_i.
Eigen::MatrixXd pooled_gram(const PanelData& panel, const PooledSubjectWeights& pw,
                            const std::vector<Eigen::MatrixXd>& sums);

}  // namespace erfe::detail
