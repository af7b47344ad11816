// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/predictor.hpp"

#include "gsstream/errors.hpp"

#include <fmt/format.h>

namespace gss {

Json PredictorState::to_json() const {
    return Json{{"backend", backend}, {"frame_index", frame_index}, {"payload", payload}};
}

PredictorState PredictorState::from_json(const Json &j) {
    if (!j.is_object() || !j.contains("backend") || !j.contains("frame_index")) {
        throw ParseError("predictor state needs 'backend' and 'frame_index'");
    }
    PredictorState s;
    s.backend = j.at("backend").get<std::string>();
    s.frame_index = j.at("frame_index").get<std::uint32_t>();
    s.payload = j.value("payload", Json());
    return s;
}

void PredictorOutput::validate() const {
    if (current_ids.size() != current_static.size() ||
        backward_deform.size() != current_static.size()) {
        throw PredictorError("predictor output: one id and backward field per current Gaussian");
    }
    try {
        for (const auto &d : backward_deform) {
            gss::validate(d);
        }
        for (const auto &[id, d] : forward_deform) {
            gss::validate(d);
        }
        for (const auto &g : current_static) {
            gss::validate(g);
        }
    } catch (const PredictorError &) {
        throw;
    } catch (const Error &e) {
        throw PredictorError(fmt::format("predictor output: {}", e.what()));
    }
}

DeformationParams identity_deformation(double t0, double gamma0) {
    DeformationParams d;
    d.velocity = Vec3::Zero();
    d.gamma0 = gamma0;
    d.gamma1 = 1.0;
    d.t0 = t0;
    return d;
}

} // namespace gss
