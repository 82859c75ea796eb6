// Solution tensor for two spin-1/2 sites at level 1, and how well it satisfies the p-shift relation.
#include <cstdio>

#include "qkzb/qkzb.hpp"

using namespace qkzb;

int main()
{
    const ModularParams mp({0.1, 0.7}, {-0.13, 0.53}, {0.031, -0.04});
    const SystemParams sp{{1.0, 1.0}, {0.0, cplx(0.31, 0.02)}, 1};
    const cplx lam(0.37, 0.21), mu(-0.22, 0.13);
    IntegrationPlan plan;

    const auto u = u_adm(lam, mu, sp, mp, {}, plan);
    for (std::size_t r = 0; r < u.rows.size(); ++r)
        for (std::size_t c = 0; c < u.cols.size(); ++c) {
            const auto i = static_cast<Eigen::Index>(r), j = static_cast<Eigen::Index>(c);
            std::printf("u[%s][%s] = %+.15f %+.15fi  (err %.1e)\n", to_string(u.rows[r]).c_str(), to_string(u.cols[c]).c_str(),
                        u.u(i, j).real(), u.u(i, j).imag(), u.err(i, j));
        }

    for (int site : {0, 1}) {
        const auto chk = qkzb_residual_step_p(site, lam, mu, sp, mp, {}, plan);
        std::printf("z_%d -> z_%d + p: residual %.2e (estimate %.2e)\n", site + 1, site + 1, chk.residual, chk.estimate);
    }
}
