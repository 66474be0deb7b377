#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <type_traits>
#include <vector>

namespace surveyforge {

// Applies fn to every element of items with at most `limit` worker threads
// and returns the results in input order, so downstream state never depends
// on completion order. If any call throws, the exception thrown for the
// lowest input index is rethrown after all workers finish.
template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, int limit, Fn fn)
    -> std::vector<std::invoke_result_t<Fn&, const In&>> {
    using Out = std::invoke_result_t<Fn&, const In&>;
    std::vector<Out> results(items.size());
    if (items.empty()) return results;

    int workers = limit < 1 ? 1 : limit;
    if (static_cast<size_t>(workers) > items.size()) {
        workers = static_cast<int>(items.size());
    }

    if (workers == 1) {
        for (size_t i = 0; i < items.size(); ++i) results[i] = fn(items[i]);
        return results;
    }

    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(items.size());
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= items.size()) return;
                try {
                    results[i] = fn(items[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
    return results;
}

}  // namespace surveyforge
