#include "bamcts/dataset.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bamcts/binary_io.hpp"
#include "bamcts/errors.hpp"

namespace bamcts {

Normalizer Normalizer::fit(const Matrix& columns) {
    if (columns.cols() == 0) throw DataError("cannot fit normalizer on empty data");
    Normalizer n;
    n.mean = columns.rowwise().mean();
    const Matrix centered = columns.colwise() - n.mean;
    n.std = (centered.array().square().rowwise().sum() / static_cast<double>(columns.cols())).sqrt().max(1e-8).matrix();
    return n;
}

Normalizer Normalizer::identity(Eigen::Index dim) { return {Vector::Zero(dim), Vector::Ones(dim)}; }

Matrix Normalizer::normalize(const Matrix& x) const {
    return ((x.colwise() - mean).array().colwise() / std.array()).matrix();
}

Vector Normalizer::normalize(const Vector& x) const { return ((x - mean).array() / std.array()).matrix(); }

Vector Normalizer::denormalize(const Vector& x) const { return (x.array() * std.array()).matrix() + mean; }

TransitionDataset::TransitionDataset(int state_dim, int action_dim) : state_dim_(state_dim), action_dim_(action_dim) {
    if (state_dim <= 0 || action_dim <= 0) throw ConfigError("dataset dimensions must be positive");
}

void TransitionDataset::add(Transition t) {
    if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ || t.action.size() != action_dim_)
        throw ShapeError("transition does not match dataset dimensions");
    if (!t.state.allFinite() || !t.next_state.allFinite() || !t.action.allFinite() || !std::isfinite(t.reward))
        throw DataError("non-finite transition record");
    records_.push_back(std::move(t));
}

bool TransitionDataset::is_episode_start(std::size_t i) const { return i == 0 || records_[i - 1].done; }

std::vector<std::size_t> TransitionDataset::episode_start_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i)
        if (is_episode_start(i)) out.push_back(i);
    return out;
}

std::vector<double> TransitionDataset::episode_returns() const {
    std::vector<double> out;
    double acc = 0.0;
    for (const auto& r : records_) {
        acc += r.reward;
        if (r.done) {
            out.push_back(acc);
            acc = 0.0;
        }
    }
    return out;
}

Vector model_input(const Vector& state, const Vector& action) {
    Vector x(state.size() + action.size());
    x << state, action;
    return x;
}

Normalizer TransitionDataset::input_stats() const {
    Matrix x(state_dim_ + action_dim_, records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) x.col(i) = model_input(records_[i].state, records_[i].action);
    return Normalizer::fit(x);
}

Normalizer TransitionDataset::target_stats(bool learned_reward, bool predict_delta) const {
    const int off = learned_reward ? 1 : 0;
    Matrix y(state_dim_ + off, records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (learned_reward) y(0, i) = records_[i].reward;
        y.col(i).tail(state_dim_) = predict_delta ? Vector(records_[i].next_state - records_[i].state)
                                                  : records_[i].next_state;
    }
    return Normalizer::fit(y);
}

void TransitionDataset::save(std::ostream& out) const {
    io::write_magic(out, "BAMD");
    io::write_u32(out, kDatasetVersion);
    io::write_u32(out, static_cast<std::uint32_t>(state_dim_));
    io::write_u32(out, static_cast<std::uint32_t>(action_dim_));
    io::write_u64(out, records_.size());
    for (const auto& r : records_) {
        for (double v : r.state) io::write_f64(out, v);
        for (double v : r.action) io::write_f64(out, v);
        io::write_f64(out, r.reward);
        for (double v : r.next_state) io::write_f64(out, v);
        io::write_f64(out, r.done ? 1.0 : 0.0);
    }
}

TransitionDataset TransitionDataset::load(std::istream& in) {
    io::expect_magic(in, "BAMD");
    const auto version = io::read_u32(in);
    if (version != kDatasetVersion) throw DataError("unsupported dataset version " + std::to_string(version));
    const int sd = static_cast<int>(io::read_u32(in));
    const int ad = static_cast<int>(io::read_u32(in));
    const auto count = io::read_u64(in);
    TransitionDataset ds(sd, ad);
    ds.records_.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        Transition t;
        t.state.resize(sd);
        t.action.resize(ad);
        t.next_state.resize(sd);
        for (auto& v : t.state) v = io::read_f64(in);
        for (auto& v : t.action) v = io::read_f64(in);
        t.reward = io::read_f64(in);
        for (auto& v : t.next_state) v = io::read_f64(in);
        t.done = io::read_f64(in) != 0.0;
        ds.add(std::move(t));
    }
    return ds;
}

void TransitionDataset::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    save(out);
}

TransitionDataset TransitionDataset::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return load(in);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    return out;
}

}  // namespace

TransitionDataset TransitionDataset::load_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV dataset is empty");
    const auto header = split_csv_line(line);
    int sd = 0, ad = 0, spd = 0;
    std::size_t col = 0;
    while (col < header.size() && header[col] == "s" + std::to_string(sd)) ++sd, ++col;
    while (col < header.size() && header[col] == "a" + std::to_string(ad)) ++ad, ++col;
    if (col >= header.size() || header[col] != "r") throw DataError("CSV header: expected column 'r'");
    ++col;
    while (col < header.size() && header[col] == "sp" + std::to_string(spd)) ++spd, ++col;
    if (col + 1 != header.size() || header[col] != "done")
        throw DataError("CSV header: expected trailing column 'done'");
    if (sd == 0 || ad == 0 || sd != spd) throw DataError("CSV header: inconsistent state/action columns");

    TransitionDataset ds(sd, ad);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("CSV line " + std::to_string(line_no) + ": wrong number of fields");
        std::vector<double> v(cells.size());
        try {
            for (std::size_t i = 0; i < cells.size(); ++i) v[i] = std::stod(cells[i]);
        } catch (const std::exception&) {
            throw DataError("CSV line " + std::to_string(line_no) + ": unparsable number");
        }
        Transition t;
        t.state = Eigen::Map<Vector>(v.data(), sd);
        t.action = Eigen::Map<Vector>(v.data() + sd, ad);
        t.reward = v[sd + ad];
        t.next_state = Eigen::Map<Vector>(v.data() + sd + ad + 1, sd);
        t.done = v.back() != 0.0;
        ds.add(std::move(t));
    }
    return ds;
}

TransitionDataset TransitionDataset::load_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return load_csv(in);
}

void TransitionDataset::save_csv(std::ostream& out) const {
    for (int i = 0; i < state_dim_; ++i) out << 's' << i << ',';
    for (int i = 0; i < action_dim_; ++i) out << 'a' << i << ',';
    out << 'r';
    for (int i = 0; i < state_dim_; ++i) out << ",sp" << i;
    out << ",done\n" << std::setprecision(17);
    for (const auto& r : records_) {
        for (double v : r.state) out << v << ',';
        for (double v : r.action) out << v << ',';
        out << r.reward;
        for (double v : r.next_state) out << ',' << v;
        out << ',' << (r.done ? 1 : 0) << '\n';
    }
}

}  // namespace bamcts
