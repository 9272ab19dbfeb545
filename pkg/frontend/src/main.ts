/** Browser entry point: mount the reviewer on #app and poll the retry queue. */

import { ApiClient } from "./api.js";
import { Controller } from "./controller.js";

const RETRY_INTERVAL_MS = 3000;

function mount(): void {
  const root = document.getElementById("app");
  if (root === null) {
    throw new Error("missing #app mount point");
  }
  const api = new ApiClient((input, init) => fetch(input, init));
  const controller = new Controller(api, root);
  controller.bindKeyboard(document);
  void controller.start();
  setInterval(() => { void controller.flushRetries(); }, RETRY_INTERVAL_MS);
}

mount();
