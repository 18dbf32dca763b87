#include "wbforge/annotation/store.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <unistd.h>

#include <spdlog/spdlog.h>

#include "wbforge/errors.hpp"

namespace wbforge {

bool CorrectionRecord::same_payload(const CorrectionRecord& other) const
{
    return key() == other.key() && corrections == other.corrections;
}

nlohmann::json CorrectionRecord::to_json() const
{
    auto list = nlohmann::json::array();
    for (const auto& c : corrections)
        list.push_back({{"keypoint", c.keypoint}, {"uv", {c.uv.x(), c.uv.y()}}});
    return {{"sample", sample}, {"annotator", annotator}, {"view", view}, {"timestamp", timestamp}, {"corrections", list}};
}

CorrectionRecord CorrectionRecord::from_json(const nlohmann::json& j)
{
    try {
        CorrectionRecord r;
        r.sample = j.at("sample").get<int>();
        r.annotator = j.at("annotator").get<std::string>();
        r.view = j.at("view").get<std::string>();
        r.timestamp = j.value("timestamp", std::string());
        for (const auto& c : j.at("corrections")) {
            const auto& uv = c.at("uv");
            if (!uv.is_array() || uv.size() != 2)
                throw SchemaError("correction uv must be [u, v]");
            r.corrections.push_back({c.at("keypoint").get<int>(), {uv[0].get<double>(), uv[1].get<double>()}});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed correction record: ") + e.what());
    }
}

std::string utc_timestamp()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[80];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

CorrectionStore::CorrectionStore(std::filesystem::path log) : path_(std::move(log))
{
    if (path_.has_parent_path())
        std::filesystem::create_directories(path_.parent_path());
    std::ifstream in(path_);
    std::string line;
    int n = 0;
    std::uintmax_t good = 0; // bytes up to the end of the last complete line
    bool torn = false;
    while (std::getline(in, line)) {
        ++n;
        const bool had_newline = !in.eof();
        if (line.empty()) {
            good += had_newline ? 1 : 0;
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            // A torn final line from a crash mid-append; everything before it was acknowledged.
            if (in.peek() == EOF) {
                spdlog::warn("{}: dropping incomplete last line {}", path_.string(), n);
                torn = true;
                break;
            }
            throw SchemaError(path_.string() + ": corrupt line " + std::to_string(n));
        }
        auto r = CorrectionRecord::from_json(j);
        live_[r.key()] = std::move(r);
        good += line.size() + (had_newline ? 1 : 0);
        if (!had_newline)
            std::ofstream(path_, std::ios::app) << '\n';
    }
    in.close();
    if (torn)
        std::filesystem::resize_file(path_, good);
}

CorrectionStore::Outcome CorrectionStore::submit(CorrectionRecord record)
{
    std::lock_guard lock(mutex_);
    const auto it = live_.find(record.key());
    if (it != live_.end() && it->second.same_payload(record))
        return Outcome::unchanged;
    if (record.timestamp.empty())
        record.timestamp = utc_timestamp();

    const std::string line = record.to_json().dump() + "\n";
    std::FILE* f = std::fopen(path_.c_str(), "ab");
    if (!f)
        throw Error("cannot open correction log " + path_.string());
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0 &&
                    ::fsync(fileno(f)) == 0;
    std::fclose(f);
    if (!ok)
        throw Error("failed to append to correction log " + path_.string());

    const Outcome o = it == live_.end() ? Outcome::created : Outcome::superseded;
    live_[record.key()] = std::move(record);
    return o;
}

std::vector<CorrectionRecord> CorrectionStore::live() const
{
    std::lock_guard lock(mutex_);
    std::vector<CorrectionRecord> out;
    out.reserve(live_.size());
    for (const auto& [_, r] : live_)
        out.push_back(r);
    return out;
}

std::string_view to_string(CorrectionStore::Outcome o)
{
    switch (o) {
    case CorrectionStore::Outcome::created: return "created";
    case CorrectionStore::Outcome::superseded: return "superseded";
    case CorrectionStore::Outcome::unchanged: return "unchanged";
    }
    return "?";
}

} // namespace wbforge
