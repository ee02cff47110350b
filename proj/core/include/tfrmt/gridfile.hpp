#pragma once

#include "tfrmt/pe.hpp"
#include "tfrmt/rmt.hpp"
#include "tfrmt/timefront.hpp"

#include <json.hpp>

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

namespace tfrmt::gridfile {

// Self-describing binary container: magic "TFRMT1", a little-endian uint64
// byte length, a compact JSON header (kind, free-form meta, array directory),
// then the arrays as row-major little-endian float64 in directory order.
// Complex arrays interleave re/im per element. Round trips are bit-exact:
// load(save(x)) == x and save(load(f)) reproduces f byte for byte.
struct Archive {
    std::string kind;
    nlohmann::json meta = nlohmann::json::object();

    void add(const std::string& name, const Eigen::MatrixXd& a);
    void add(const std::string& name, const Eigen::MatrixXcd& a);
    void add(const std::string& name, const Eigen::VectorXd& a);
    void add(const std::string& name, const Eigen::VectorXcd& a);

    bool has(const std::string& name) const;
    Eigen::MatrixXd real(const std::string& name) const;
    Eigen::MatrixXcd cplx(const std::string& name) const;
    Eigen::VectorXd real_vec(const std::string& name) const;

    void save(const std::filesystem::path& path) const;
    static Archive load(const std::filesystem::path& path);

    struct Entry {
        std::string name;
        std::string dtype;  // "f8" or "c16"
        std::int64_t rows = 0;
        std::int64_t cols = 0;
        std::vector<double> data;  // row-major; complex: re,im interleaved
    };
    std::vector<Entry> entries;

  private:
    const Entry& find(const std::string& name) const;
};

// Domain-type wrappers. extra_meta entries are merged into the header meta.
void save_unitary(const std::filesystem::path& path, const UnitaryPropagator& u,
                  const nlohmann::json& extra_meta = nlohmann::json::object());
UnitaryPropagator load_unitary(const std::filesystem::path& path);

void save_variance(const std::filesystem::path& path, const VarianceProfile& vp,
                   const nlohmann::json& extra_meta = nlohmann::json::object());
VarianceProfile load_variance(const std::filesystem::path& path);

void save_timefront(const std::filesystem::path& path, const TimefrontGrid& tg,
                    const nlohmann::json& extra_meta = nlohmann::json::object());
TimefrontGrid load_timefront(const std::filesystem::path& path);

void save_intensity(const std::filesystem::path& path, const IntensityGrid& ig,
                    const nlohmann::json& extra_meta = nlohmann::json::object());
IntensityGrid load_intensity(const std::filesystem::path& path);

} // namespace tfrmt::gridfile
