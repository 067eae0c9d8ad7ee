import { ApiClient } from "./api.js";
import { ReviewApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  root.tabIndex = 0;
  const app = new ReviewApp(root, new ApiClient(""), { refreshMs: 5000 });
  void app.start();
  root.focus();
}
