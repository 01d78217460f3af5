from django.urls import include, path

urlpatterns = [
    path("ws/", include("cte.urls")),
]
