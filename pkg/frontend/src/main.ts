// Browser entry point; wires the page to the real clock and fetch.

import { initApp } from "./app.js";

initApp(document, {
    fetch: (input, init) => window.fetch(input, init),
    now: () => performance.now(),
});
