// Default HttpTransport over cpp-httplib; kept in its own translation unit
// so the heavy header is compiled once.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "surveyforge/backend.hpp"
#include "surveyforge/errors.hpp"

namespace surveyforge {

namespace {

// Splits a URL into (scheme://host[:port], /path).
std::pair<std::string, std::string> split_url(const std::string& url) {
    size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint URL must include a scheme: " + url);
    }
    size_t path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

class DefaultHttpTransport : public HttpTransport {
public:
    HttpResponse post(const std::string& url,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      const std::string& body) override {
        auto [base, path] = split_url(url);
        httplib::Client client(base);
        client.set_connection_timeout(30, 0);
        client.set_read_timeout(600, 0);
        client.set_write_timeout(60, 0);

        httplib::Headers hdrs;
        std::string content_type = "application/json";
        for (const auto& [key, value] : headers) {
            if (key == "Content-Type") {
                content_type = value;
            } else {
                hdrs.emplace(key, value);
            }
        }
        auto result = client.Post(path, hdrs, body, content_type);
        HttpResponse response;
        if (!result) {
            response.transport_error = httplib::to_string(result.error());
            return response;
        }
        response.status = result->status;
        response.body = result->body;
        return response;
    }
};

}  // namespace

std::shared_ptr<HttpTransport> make_default_transport() {
    return std::make_shared<DefaultHttpTransport>();
}

}  // namespace surveyforge
