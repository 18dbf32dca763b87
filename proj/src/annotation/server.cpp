#include "wbforge/annotation/server.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "wbforge/errors.hpp"

namespace wbforge {

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& reason)
{
    reply(res, status, {{"error", reason}});
}

std::optional<std::string> query(const httplib::Request& req, const char* key)
{
    if (!req.has_param(key))
        return std::nullopt;
    return req.get_param_value(key);
}

std::string content_type(const std::filesystem::path& p)
{
    const auto ext = p.extension().string();
    if (ext == ".png")
        return "image/png";
    if (ext == ".jpg" || ext == ".jpeg")
        return "image/jpeg";
    if (ext == ".ppm")
        return "image/x-portable-pixmap";
    return "application/octet-stream";
}

} // namespace

AnnotationServer::AnnotationServer(const ReviewSet& set, CorrectionStore& store, AnnotationServerOptions options)
    : set_(set), store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>())
{
    auto& svr = *server_;

    // Maps library errors to status codes around every handler.
    auto guarded = [](auto fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const NotFoundError& e) {
                fail(res, 404, e.what());
            } catch (const SchemaError& e) {
                fail(res, 400, e.what());
            } catch (const nlohmann::json::exception& e) {
                fail(res, 400, std::string("malformed JSON: ") + e.what());
            } catch (const ValidationError& e) {
                fail(res, 422, e.what());
            } catch (const std::exception& e) {
                spdlog::error("{} {}: {}", req.method, req.path, e.what());
                fail(res, 500, e.what());
            }
        };
    };

    svr.Get("/api/samples", guarded([this](const httplib::Request&, httplib::Response& res) {
        auto samples = nlohmann::json::array();
        for (const auto& s : set_.samples())
            samples.push_back({{"id", s.id}, {"subject", s.subject}});
        auto views = nlohmann::json::array();
        for (const auto& c : set_.rig().cameras())
            views.push_back(c.id);
        reply(res, 200, {{"count", set_.samples().size()}, {"samples", samples}, {"views", views}});
    }));

    svr.Get(R"(/api/samples/(-?\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        reply(res, 200, set_.payload(std::stoi(req.matches[1]), query(req, "view")));
    }));

    svr.Get(R"(/api/samples/(-?\d+)/image)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const ReviewSample& s = set_.at(std::stoi(req.matches[1]));
        const auto view = query(req, "view");
        if (!view)
            throw ValidationError("image requests need ?view=");
        const int v = set_.view_index(*view);
        const auto img = s.images.find(*view);
        if (img != s.images.end() && std::filesystem::exists(img->second)) {
            std::ifstream in(img->second, std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            res.set_content(ss.str(), content_type(img->second));
            return;
        }
        res.set_content(render_svg(set_, s, v), "image/svg+xml");
    }));

    svr.Post(R"(/api/samples/(-?\d+)/corrections)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const int id = std::stoi(req.matches[1]);
        set_.at(id);
        nlohmann::json body = nlohmann::json::parse(req.body);
        if (!body.is_object())
            throw SchemaError("correction payload must be a JSON object");
        if (body.contains("sample") && body["sample"] != id)
            throw ValidationError("payload sample does not match the URL");
        body["sample"] = id;
        body.erase("timestamp"); // server clock
        const CorrectionRecord rec = CorrectionRecord::from_json(body);
        set_.validate(rec);
        const auto outcome = store_.submit(rec);
        reply(res, outcome == CorrectionStore::Outcome::created ? 201 : 200,
              {{"status", std::string(to_string(outcome))}, {"sample", id}, {"view", rec.view}, {"annotator", rec.annotator}});
    }));

    svr.Get("/api/report", guarded([this](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, compute_crosscheck(set_, store_.live(), options_.crosscheck).to_json());
    }));

    svr.Get("/api/layout", guarded([this](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, set_.layout().to_json());
    }));

    if (options_.ui_dir && !svr.set_mount_point("/", options_.ui_dir->string()))
        throw Error("UI directory " + options_.ui_dir->string() + " does not exist");
}

AnnotationServer::~AnnotationServer()
{
    stop();
}

int AnnotationServer::bind(const std::string& host, int port)
{
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0)
        throw Error("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void AnnotationServer::listen()
{
    server_->listen_after_bind();
}

void AnnotationServer::stop()
{
    if (server_ && server_->is_running())
        server_->stop();
}

void AnnotationServer::wait_until_ready() const
{
    server_->wait_until_ready();
}

} // namespace wbforge
