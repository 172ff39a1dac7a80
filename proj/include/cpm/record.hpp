#pragma once

// Measurement records and their on-disk form: a columnar CSV of increments
// (t, dQ1[, dQ2]) plus a JSON sidecar with the generating parameters.
// Values are written with 17 significant digits so the CSV round-trips
// doubles exactly.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpm/errors.hpp"
#include "cpm/gaussian.hpp"

namespace cpm {

struct MeasurementRecord {
    double dt = 1e-3;                 // step, in units of 1/omega
    std::vector<double> increments_q1; // dQ1 per step
    std::vector<double> increments_q2; // heterodyne only; empty for homodyne
    std::uint64_t seed = 0;
    ModelParams params;

    std::size_t steps() const { return increments_q1.size(); }

    void validate() const {
        params.validate();
        if (!(dt > 0.0)) throw IncompatibleRecordError("record: dt must be > 0");
        if (params.mode == Mode::Heterodyne) {
            if (increments_q2.size() != increments_q1.size())
                throw IncompatibleRecordError("record: heterodyne record needs matching dQ2 increments");
        } else if (!increments_q2.empty()) {
            throw IncompatibleRecordError("record: homodyne record must not carry dQ2 increments");
        }
    }
};

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace record_io {

inline nlohmann::json params_to_json(const ModelParams& p) {
    return nlohmann::json{{"omega", p.omega}, {"r", p.r},        {"phi", p.phi},
                          {"q", p.q},         {"mode", to_string(p.mode)}};
}

inline ModelParams params_from_json(const nlohmann::json& j) {
    ModelParams p;
    p.omega = j.at("omega").get<double>();
    p.r = j.at("r").get<double>();
    p.phi = j.at("phi").get<double>();
    p.q = j.at("q").get<double>();
    const std::string m = j.at("mode").get<std::string>();
    if (m == "homodyne") p.mode = Mode::Homodyne;
    else if (m == "heterodyne") p.mode = Mode::Heterodyne;
    else throw std::invalid_argument("params: unknown mode '" + m + "'");
    p.validate();
    return p;
}

} // namespace record_io

inline void write_record_csv(const MeasurementRecord& rec, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const bool het = rec.params.mode == Mode::Heterodyne;
    out << (het ? "t,dQ1,dQ2\n" : "t,dQ1\n");
    for (std::size_t k = 0; k < rec.increments_q1.size(); ++k) {
        out << format_g17(static_cast<double>(k) * rec.dt) << ',' << format_g17(rec.increments_q1[k]);
        if (het) out << ',' << format_g17(rec.increments_q2[k]);
        out << '\n';
    }
}

inline void write_record_sidecar(const MeasurementRecord& rec, const std::string& path) {
    nlohmann::json j{{"dt", rec.dt},
                     {"seed", rec.seed},
                     {"steps", rec.increments_q1.size()},
                     {"params", record_io::params_to_json(rec.params)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

// Reads a record back from csv + sidecar pair.
inline MeasurementRecord read_record(const std::string& csv_path, const std::string& sidecar_path) {
    MeasurementRecord rec;
    {
        std::ifstream in(sidecar_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + sidecar_path);
        nlohmann::json j = nlohmann::json::parse(in);
        rec.dt = j.at("dt").get<double>();
        rec.seed = j.at("seed").get<std::uint64_t>();
        rec.params = record_io::params_from_json(j.at("params"));
    }
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(csv_path + ": missing header");
    const bool het = line.find("dQ2") != std::string::npos;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ','); // t column is redundant on read
        std::getline(ss, cell, ',');
        rec.increments_q1.push_back(std::strtod(cell.c_str(), nullptr));
        if (het) {
            std::getline(ss, cell, ',');
            rec.increments_q2.push_back(std::strtod(cell.c_str(), nullptr));
        }
    }
    rec.validate();
    return rec;
}

} // namespace cpm
