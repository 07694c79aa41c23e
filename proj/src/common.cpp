#include "htdsm/common.hpp"

namespace htdsm {

PointSet::PointSet(std::size_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
    if (dim_ == 0 ? !data_.empty() : data_.size() % dim_ != 0) {
        throw DomainError("PointSet: data length is not a multiple of dim");
    }
}

void PointSet::push_back(std::span<const double> point) {
    if (dim_ == 0 && data_.empty()) {
        dim_ = point.size();
    }
    if (point.size() != dim_) {
        throw DomainError("PointSet: point dimension mismatch");
    }
    data_.insert(data_.end(), point.begin(), point.end());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sq += d * d;
    }
    return sq;
}

}  // namespace htdsm
